//! Rational-ratio polyphase resampling with a Kaiser-windowed sinc
//! anti-aliasing filter.

use std::f64::consts::PI;

use super::{PrepError, PrepStage, Result, SignalTrace};

/// Filter half-length in units of the larger of the up/down factors.
const HALF_LEN_FACTOR: usize = 10;
const KAISER_BETA: f64 = 5.0;
/// Largest denominator tried when approximating a non-integer rate ratio.
const MAX_RATIO_DENOMINATOR: u64 = 10_000;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Reduced `(up, down)` with `up / down ≈ target / source`.
pub fn rational_ratio(source: f64, target: f64) -> (u64, u64) {
    let ratio = target / source;
    let mut best = (1u64, 1u64, f64::INFINITY);
    for down in 1..=MAX_RATIO_DENOMINATOR {
        let up = (ratio * down as f64).round().max(1.0) as u64;
        let err = (up as f64 / down as f64 - ratio).abs();
        if err < best.2 {
            best = (up, down, err);
            if err <= 1e-12 * ratio {
                break;
            }
        }
    }
    let g = gcd(best.0, best.1);
    (best.0 / g, best.1 / g)
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Low-pass FIR with cutoff `cutoff` (fraction of Nyquist), unit DC gain.
pub(crate) fn kaiser_lowpass(taps: usize, cutoff: f64, beta: f64) -> Vec<f64> {
    let centre = (taps - 1) as f64 / 2.0;
    let norm = bessel_i0(beta);
    let mut h: Vec<f64> = (0..taps)
        .map(|n| {
            let t = n as f64 - centre;
            let r = if centre > 0.0 { t / centre } else { 0.0 };
            let w = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / norm;
            cutoff * sinc(cutoff * t) * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Upsample by `up`, filter, downsample by `down`. Output length is
/// `ceil(len * up / down)`; the filter delay is compensated so output
/// sample `k` is aligned with input time `k * down / up`.
pub fn resample_poly(samples: &[f64], up: usize, down: usize) -> Vec<f64> {
    assert!(up > 0 && down > 0);
    if up == 1 && down == 1 {
        return samples.to_vec();
    }
    let n_in = samples.len();
    let n_out = (n_in * up).div_ceil(down);
    let max_rate = up.max(down);
    let half_len = HALF_LEN_FACTOR * max_rate;
    let taps = 2 * half_len + 1;
    let mut h = kaiser_lowpass(taps, 1.0 / max_rate as f64, KAISER_BETA);
    // Interpolation gain: zero-stuffing divides the passband level by `up`.
    h.iter_mut().for_each(|v| *v *= up as f64);

    let mut out = Vec::with_capacity(n_out);
    for k in 0..n_out {
        // Position on the upsampled grid, shifted by the filter's group delay.
        let t = (k * down + half_len) as i64;
        // Contributing input indices i satisfy 0 <= t - i*up < taps.
        let i_hi = (t / up as i64).min(n_in as i64 - 1);
        let i_lo = ((t - taps as i64 + 1).max(0) as f64 / up as f64).ceil() as i64;
        let mut acc = 0.0;
        let mut i = i_lo;
        while i <= i_hi {
            acc += samples[i as usize] * h[(t - i * up as i64) as usize];
            i += 1;
        }
        out.push(acc);
    }
    out
}

/// Resamples a trace to `target_rate`.
pub fn resample(trace: &SignalTrace, target_rate: f64) -> Result<SignalTrace> {
    if !(trace.rate > 0.0) || !(target_rate > 0.0) {
        return Err(PrepError::ZeroRate);
    }
    let (up, down) = rational_ratio(trace.rate, target_rate);
    let samples = resample_poly(&trace.samples, up as usize, down as usize);
    Ok(trace.derive(samples, target_rate, PrepStage::Resample))
}
