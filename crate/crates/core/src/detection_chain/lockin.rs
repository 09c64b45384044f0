//! Sample-by-sample lock-in simulation of a chopped photocurrent.
//!
//! Each noise source draws from its own ChaCha stream derived from the seed,
//! so runs that differ only in signal level share their noise realizations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::amplifier::AmplifierChain;
use super::detector::DetectorSpec;
use crate::error::{Error, Result};
use crate::fluorescence::ModulationSpec;
use crate::units::{photon_energy, Wavelength, C};

/// Stray laser light reaching the detector while the repumper is on.
/// Its power follows an Ornstein–Uhlenbeck process around `mean_power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundScatter {
    #[serde(rename = "mean_power_w", default)]
    pub mean_power: f64,
    #[serde(rename = "fluctuation_rms_w", default)]
    pub fluctuation_rms: f64,
    #[serde(rename = "correlation_time_s", default = "default_correlation")]
    pub correlation_time: f64,
}

fn default_correlation() -> f64 {
    1.0
}

impl Default for BackgroundScatter {
    fn default() -> Self {
        BackgroundScatter {
            mean_power: 0.0,
            fluctuation_rms: 0.0,
            correlation_time: default_correlation(),
        }
    }
}

fn default_settle() -> f64 {
    5.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockinSimConfig {
    #[serde(rename = "duration_s")]
    pub duration: f64,
    #[serde(rename = "sample_rate_hz")]
    pub sample_rate: f64,
    /// Spacing of recorded output samples; defaults to a tenth of the time constant.
    #[serde(rename = "record_interval_s", default, skip_serializing_if = "Option::is_none")]
    pub record_interval: Option<f64>,
    /// Output before this many time constants is excluded from the statistics.
    #[serde(default = "default_settle")]
    pub settle_time_constants: f64,
    #[serde(default = "yes")]
    pub shot_noise: bool,
    #[serde(default)]
    pub background: BackgroundScatter,
}

impl Default for LockinSimConfig {
    fn default() -> Self {
        LockinSimConfig {
            duration: 300.0,
            sample_rate: 6000.0,
            record_interval: None,
            settle_time_constants: default_settle(),
            shot_noise: true,
            background: BackgroundScatter::default(),
        }
    }
}

const MAX_SAMPLES: f64 = 2e9;

impl LockinSimConfig {
    /// A noiseless configuration: no shot noise, no background.
    pub fn noiseless(duration: f64, sample_rate: f64) -> Self {
        LockinSimConfig {
            duration,
            sample_rate,
            shot_noise: false,
            ..Default::default()
        }
    }

    fn check(&self, a: &AmplifierChain, m: &ModulationSpec) -> Result<()> {
        let fastest = a.reference_frequency.max(m.frequency);
        if !(self.sample_rate >= 10.0 * fastest) {
            return Err(Error::Config(format!(
                "sample rate {} Hz is below 10x the modulation frequency {} Hz",
                self.sample_rate, fastest
            )));
        }
        if !(self.duration >= 10.0 * a.time_constant) {
            return Err(Error::Config(format!(
                "duration {} s is shorter than 10 time constants ({} s)",
                self.duration, a.time_constant
            )));
        }
        if self.duration * self.sample_rate > MAX_SAMPLES {
            return Err(Error::Config("simulation would exceed 2e9 samples".into()));
        }
        if let Some(r) = self.record_interval {
            if !(r > 0.0) {
                return Err(Error::Config("record interval must be positive".into()));
            }
        }
        if !(self.settle_time_constants >= 0.0) {
            return Err(Error::Config("settle_time_constants must be non-negative".into()));
        }
        let b = &self.background;
        if !(b.mean_power >= 0.0 && b.fluctuation_rms >= 0.0 && b.correlation_time > 0.0) {
            return Err(Error::Config("background parameters must be non-negative with positive correlation time".into()));
        }
        Ok(())
    }
}

/// Ion fluorescence reaching the detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalSignal {
    /// Power at the detector while the ions fluoresce, W.
    #[serde(rename = "peak_power_w")]
    pub peak_power: f64,
    pub modulation: ModulationSpec,
    #[serde(rename = "wavelength_m")]
    pub wavelength: Wavelength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockinTrace {
    pub time_s: Vec<f64>,
    pub output_v: Vec<f64>,
    /// Index of the first record included in the statistics.
    pub settled_from: usize,
    pub mean_v: f64,
    pub std_v: f64,
}

impl LockinTrace {
    pub fn settled(&self) -> &[f64] {
        &self.output_v[self.settled_from..]
    }
}

const STREAM_SHOT: u64 = 0;
const STREAM_AMP: u64 = 1;
const STREAM_BACKGROUND: u64 = 2;
const STREAMS_PER_RUN: u64 = 4;

fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Simulate the lock-in output for `duration` seconds.
pub fn lockin_simulate(
    a: &AmplifierChain,
    detector: &DetectorSpec,
    temperature: f64,
    signal: &OpticalSignal,
    cfg: &LockinSimConfig,
    seed: u64,
) -> Result<LockinTrace> {
    simulate_run(a, detector, temperature, signal, cfg, seed, 0)
}

fn simulate_run(
    a: &AmplifierChain,
    detector: &DetectorSpec,
    temperature: f64,
    signal: &OpticalSignal,
    cfg: &LockinSimConfig,
    seed: u64,
    run: u64,
) -> Result<LockinTrace> {
    a.validate()?;
    detector.validate()?;
    signal.modulation.validate()?;
    cfg.check(a, &signal.modulation)?;
    if !(signal.peak_power >= 0.0) {
        return Err(Error::Domain("negative signal power".into()));
    }

    let m = &signal.modulation;
    let e = C.elementary_charge;
    let qe = detector.quantum_efficiency_at(temperature, signal.wavelength)?;
    let hv = photon_energy(signal.wavelength);
    let dt = 1.0 / cfg.sample_rate;
    let n = (cfg.duration * cfg.sample_rate).round() as u64;

    let base = run * STREAMS_PER_RUN;
    let mut shot_rng = rng(seed, base + STREAM_SHOT);
    let mut amp_rng = rng(seed, base + STREAM_AMP);
    let mut bg_rng = rng(seed, base + STREAM_BACKGROUND);

    let amp_sigma = a.current_noise_density(temperature) * (0.5 * cfg.sample_rate).sqrt();
    let bg = cfg.background;
    let rho = (-dt / bg.correlation_time).exp();
    let kick = bg.fluctuation_rms * (1.0 - rho * rho).sqrt();
    let mut x: f64 = bg.fluctuation_rms * normal(&mut bg_rng);

    let alpha = 1.0 - (-dt / a.time_constant).exp();
    let record_every = ((cfg.record_interval.unwrap_or(a.time_constant / 10.0) * cfg.sample_rate).round() as u64).max(1);
    let settle_time = cfg.settle_time_constants * a.time_constant;
    let gain = detector.internal_gain;
    let dark_electrons = detector.dark_current / e * dt;
    let reference = ModulationSpec {
        frequency: a.reference_frequency,
        duty: 0.5,
        depth: 1.0,
        ..Default::default()
    };

    let mut y = 0.0;
    let mut time_s = Vec::with_capacity((n / record_every + 1) as usize);
    let mut output_v = Vec::with_capacity(time_s.capacity());
    for k in 0..n {
        let t_mid = (k as f64 + 0.5) * dt;
        let gate = m.gate(t_mid);
        let bg_power = (bg.mean_power + x).max(0.0) * gate;
        x = rho * x + kick * normal(&mut bg_rng);

        let photons = (signal.peak_power * m.level(t_mid) + bg_power) / hv * dt;
        let mu = photons * qe + dark_electrons;
        let electrons = if cfg.shot_noise && mu > 0.0 {
            Poisson::new(mu).map_err(|err| Error::Domain(err.to_string()))?.sample(&mut shot_rng)
        } else {
            mu
        };
        let current = electrons * e * gain / dt;
        let noise = if amp_sigma > 0.0 {
            amp_sigma * normal(&mut amp_rng)
        } else {
            0.0
        };
        let r = 2.0 * reference.gate(t_mid) - 1.0;
        let mixed = a.lockin_gain * a.transimpedance * (current + noise) * r;
        y += alpha * (mixed - y);
        if (k + 1) % record_every == 0 {
            time_s.push((k + 1) as f64 * dt);
            output_v.push(y);
        }
    }

    let settled_from = time_s.partition_point(|&t| t < settle_time);
    let tail = &output_v[settled_from..];
    if tail.len() < 2 {
        return Err(Error::Config("too few settled samples; lengthen the run".into()));
    }
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let var = tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (tail.len() - 1) as f64;
    Ok(LockinTrace {
        time_s,
        output_v,
        settled_from,
        mean_v: mean,
        std_v: var.sqrt(),
    })
}

/// Lock-in runs with and without ions under identical settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockinComparison {
    pub with_ions: LockinTrace,
    pub without_ions: LockinTrace,
    /// Background-subtracted ion signal, V.
    pub signal_v: f64,
    pub pooled_std_v: f64,
    /// Signal divided by pooled standard deviation.
    pub separation: f64,
}

/// Runs the scenario twice, with the fluorescence on and off. The two runs use
/// disjoint random streams.
pub fn lockin_compare(
    a: &AmplifierChain,
    detector: &DetectorSpec,
    temperature: f64,
    signal: &OpticalSignal,
    cfg: &LockinSimConfig,
    seed: u64,
) -> Result<LockinComparison> {
    let with_ions = simulate_run(a, detector, temperature, signal, cfg, seed, 0)?;
    let dark = OpticalSignal { peak_power: 0.0, ..*signal };
    let without_ions = simulate_run(a, detector, temperature, &dark, cfg, seed, 1)?;
    let signal_v = with_ions.mean_v - without_ions.mean_v;
    let pooled = (0.5 * (with_ions.std_v.powi(2) + without_ions.std_v.powi(2))).sqrt();
    Ok(LockinComparison {
        signal_v,
        pooled_std_v: pooled,
        separation: if pooled > 0.0 { signal_v / pooled } else { f64::INFINITY },
        with_ions,
        without_ions,
    })
}

/// Predicted settled output standard deviation: background fluctuation
/// through the lock-in plus white amplifier, Johnson and shot noise.
pub fn predicted_output_std(
    a: &AmplifierChain,
    detector: &DetectorSpec,
    temperature: f64,
    signal: &OpticalSignal,
    bg: &BackgroundScatter,
) -> Result<f64> {
    let (bg_gain, white) = noise_terms(a, detector, temperature, signal, bg)?;
    let filtered = bg.fluctuation_rms * bg_gain * (bg.correlation_time / (bg.correlation_time + a.time_constant)).sqrt();
    Ok((filtered * filtered + white * white).sqrt())
}

/// Background fluctuation amplitude (W) that makes the settled output
/// standard deviation equal `target_std` (V).
pub fn background_rms_for_output_std(
    a: &AmplifierChain,
    detector: &DetectorSpec,
    temperature: f64,
    signal: &OpticalSignal,
    bg: &BackgroundScatter,
    target_std: f64,
) -> Result<f64> {
    let (bg_gain, white) = noise_terms(a, detector, temperature, signal, bg)?;
    if !(target_std > white) {
        return Err(Error::Domain(format!(
            "target {target_std} V is below the white-noise floor {white} V"
        )));
    }
    let factor = (bg.correlation_time / (bg.correlation_time + a.time_constant)).sqrt();
    Ok((target_std * target_std - white * white).sqrt() / (bg_gain * factor))
}

/// Returns (V of output per W of background, white-noise output std).
fn noise_terms(
    a: &AmplifierChain,
    detector: &DetectorSpec,
    temperature: f64,
    signal: &OpticalSignal,
    bg: &BackgroundScatter,
) -> Result<(f64, f64)> {
    a.validate()?;
    let m = &signal.modulation;
    let r = detector.responsivity_at(temperature, signal.wavelength)? * detector.internal_gain;
    let gate = ModulationSpec { depth: 1.0, ..*m };
    let bg_gain = a.effective_gain(&gate) * r;
    let mean_current = (signal.peak_power * m.mean_level() + bg.mean_power * m.duty) * r + detector.dark_current;
    let shot_density2 = 2.0 * C.elementary_charge * mean_current * detector.internal_gain;
    let density = (a.current_noise_density(temperature).powi(2) + shot_density2).sqrt();
    Ok((bg_gain, a.white_noise_output_std(density)))
}

/// Fixed-width histogram. Bins are closed on the left and open on the right,
/// except the last, which includes its upper edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Histogram> {
    if bins == 0 || !(hi > lo) {
        return Err(Error::Domain(format!("bad histogram range [{lo}, {hi}] with {bins} bins")));
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0u64; bins];
    for &v in values {
        if v < lo || v > hi || v.is_nan() {
            continue;
        }
        let mut i = ((v - lo) / width).floor() as usize;
        // guard against rounding at interior edges
        while i > 0 && v < edges[i] {
            i -= 1;
        }
        while i + 1 < bins && v >= edges[i + 1] {
            i += 1;
        }
        counts[i.min(bins - 1)] += 1;
    }
    Ok(Histogram { edges, counts })
}
