//! Spin magnitude from the periodicity of the logo event rate.
//!
//! Counts are binned, EMA-smoothed and mean-subtracted, then band-passed
//! around the dominant modulation frequency. The rotation period is the
//! spacing of positive→negative zero crossings of the filtered rate.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::SpinError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateConfig {
    pub bin_us: u64,
    pub ema_alpha: f64,
    /// Width of the Gaussian band-pass as a fraction of the centre frequency.
    pub band_sigma: f64,
    /// A spectral peak near half the dominant frequency at least this
    /// fraction of its height is taken as the fundamental.
    pub subharmonic_ratio: f64,
    /// Zero-padding factor of the spectrum.
    pub zero_pad: usize,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            bin_us: 1000,
            ema_alpha: 0.2,
            band_sigma: 0.25,
            subharmonic_ratio: 0.7,
            zero_pad: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    pub rps: f64,
    /// Dominant modulation frequency picked from the spectrum, Hz.
    pub f0_hz: f64,
    /// Positive→negative crossings of the filtered rate, µs from the start
    /// of the observed span.
    pub transitions_us: Vec<f64>,
}

/// Estimates the rotation rate from event timestamps (sorted, µs) over
/// their own span.
pub fn estimate_magnitude_event_rate(times: &[u64], cfg: &RateConfig) -> Result<RateEstimate, SpinError> {
    let (Some(&first), Some(&last)) = (times.first(), times.last()) else {
        return Err(SpinError::NoPeriodicity { transitions: 0 });
    };
    estimate_magnitude_event_rate_in(times, (first, last), cfg)
}

/// As [`estimate_magnitude_event_rate`] over the observed interval
/// `span = [first, last]`, which may extend past the events when the logo
/// is out of view at either end. Transitions are reported relative to its
/// start.
pub fn estimate_magnitude_event_rate_in(times: &[u64], span: (u64, u64), cfg: &RateConfig) -> Result<RateEstimate, SpinError> {
    let (Some(&t_min), Some(&t_max)) = (times.first(), times.last()) else {
        return Err(SpinError::NoPeriodicity { transitions: 0 });
    };
    let (first, last) = (span.0.min(t_min), span.1.max(t_max));
    let bin_us = cfg.bin_us.max(1);
    let nb = ((last - first) / bin_us + 1) as usize;
    if nb < 4 {
        return Err(SpinError::NoPeriodicity { transitions: 0 });
    }
    let mut counts = vec![0.0f64; nb];
    for &t in times {
        counts[((t - first) / bin_us) as usize] += 1.0;
    }
    let bin_s = bin_us as f64 * 1e-6;
    let n = nb * cfg.zero_pad.max(1);
    let df = 1.0 / (n as f64 * bin_s);
    let f_min = 2.0 / (nb as f64 * bin_s);

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mean = counts.iter().sum::<f64>() / nb as f64;
    let mut spec: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); n];
    for (i, &c) in counts.iter().enumerate() {
        let hann = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (nb - 1) as f64).cos();
        spec[i].re = (c - mean) * hann;
    }
    fwd.process(&mut spec);
    let amp: Vec<f64> = spec[..n / 2 + 1].iter().map(|z| z.norm()).collect();
    let k_min = (f_min / df).ceil() as usize;
    if k_min >= amp.len() {
        return Err(SpinError::NoPeriodicity { transitions: 0 });
    }
    let k0 = argmax(&amp, k_min, amp.len());
    if amp[k0] <= 0.0 {
        return Err(SpinError::NoPeriodicity { transitions: 0 });
    }
    let mut f0 = k0 as f64 * df;
    let j = (f0 / 2.0 / df).round() as usize;
    let w = ((0.1 * j as f64) as usize).max(1);
    if j >= k_min + w {
        let js = argmax(&amp, j - w, j + w + 1);
        if amp[js] >= cfg.subharmonic_ratio * amp[k0] {
            f0 = js as f64 * df;
        }
    }

    let mut ema = Vec::with_capacity(nb);
    let mut s = counts[0];
    for &c in &counts {
        s = cfg.ema_alpha * c + (1.0 - cfg.ema_alpha) * s;
        ema.push(s);
    }
    let ema_mean = ema.iter().sum::<f64>() / nb as f64;
    let mut sig: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); n];
    for (z, e) in sig.iter_mut().zip(&ema) {
        z.re = e - ema_mean;
    }
    fwd.process(&mut sig);
    let sigma = cfg.band_sigma * f0;
    for (k, z) in sig.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * df;
        *z *= (-0.5 * ((f - f0) / sigma).powi(2)).exp();
    }
    inv.process(&mut sig);
    let filtered: Vec<f64> = sig[..nb].iter().map(|z| z.re / n as f64).collect();

    let transitions_us: Vec<f64> = filtered
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] > 0.0 && w[1] <= 0.0)
        .map(|(i, w)| (i as f64 + w[0] / (w[0] - w[1])) * bin_us as f64)
        .collect();
    let period_us = robust_period(&transitions_us).ok_or(SpinError::NoPeriodicity {
        transitions: transitions_us.len(),
    })?;
    Ok(RateEstimate {
        rps: 1e6 / period_us,
        f0_hz: f0,
        transitions_us,
    })
}

fn argmax(a: &[f64], lo: usize, hi: usize) -> usize {
    (lo..hi.min(a.len())).fold(lo, |best, k| if a[k] > a[best] { k } else { best })
}

/// Mean crossing interval, counting an interval of about `m` median spacings
/// as `m` periods so a missed crossing does not halve the estimate.
fn robust_period(transitions_us: &[f64]) -> Option<f64> {
    if transitions_us.len() < 2 {
        return None;
    }
    let d: Vec<f64> = transitions_us.windows(2).map(|w| w[1] - w[0]).collect();
    let mut sorted = d.clone();
    sorted.sort_by(f64::total_cmp);
    let med = median_sorted(&sorted);
    let periods: f64 = d.iter().map(|x| (x / med).round().max(1.0)).sum();
    Some(d.iter().sum::<f64>() / periods)
}

fn median_sorted(s: &[f64]) -> f64 {
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Rotation rate from crossing timestamps alone, rps.
pub fn magnitude_from_transitions(transitions_us: &[f64]) -> Result<f64, SpinError> {
    robust_period(transitions_us)
        .map(|p| 1e6 / p)
        .ok_or(SpinError::NoPeriodicity {
            transitions: transitions_us.len(),
        })
}
