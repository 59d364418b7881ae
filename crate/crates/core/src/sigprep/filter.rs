//! Butterworth band-pass design (bilinear transform) and zero-phase
//! forward-backward filtering with second-order sections.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::{PrepError, PrepStage, Result, SignalTrace};

/// Prototype order; the band-pass has twice as many poles.
pub const BUTTERWORTH_ORDER: usize = 4;

/// Transposed direct-form II biquad, `a0 == 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z: Complex64) -> Complex64 {
        let zi = z.inv();
        let num = self.b[0] + self.b[1] * zi + self.b[2] * zi * zi;
        let den = self.a[0] + self.a[1] * zi + self.a[2] * zi * zi;
        num / den
    }

    /// Internal state for a constant input of 1 at steady state.
    fn step_state(&self) -> [f64; 2] {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        let gain = (b0 + b1 + b2) / (1.0 + a1 + a2);
        let z2 = b2 - a2 * gain;
        let z1 = b1 - a1 * gain + z2;
        [z1, z2]
    }

    fn dc_gain(&self) -> f64 {
        (self.b.iter().sum::<f64>()) / (self.a.iter().sum::<f64>())
    }

    fn run(&self, x: &mut [f64], mut state: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + state[0];
            state[0] = b1 * input - a1 * y + state[1];
            state[1] = b2 * input - a2 * y;
            *v = y;
        }
    }
}

/// Cascade of second-order sections.
#[derive(Clone, Debug, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
}

impl Sos {
    /// Complex frequency response at `freq` Hz for sampling rate `rate`.
    pub fn response(&self, freq: f64, rate: f64) -> Complex64 {
        let z = Complex64::from_polar(1.0, 2.0 * PI * freq / rate);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z))
    }

    /// Single forward pass starting from rest.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            s.run(&mut y, [0.0, 0.0]);
        }
        y
    }

    /// Forward pass with every section started at the steady state that a
    /// constant input of `x0` would produce.
    fn filter_from(&self, y: &mut [f64], x0: f64) {
        let mut level = x0;
        for s in &self.sections {
            let zi = s.step_state();
            s.run(y, [zi[0] * level, zi[1] * level]);
            level *= s.dc_gain();
        }
    }

    /// Zero-phase filtering: odd extension at both ends, forward pass,
    /// reversed pass, trim. Output length equals input length.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = (3 * (2 * self.sections.len() + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        let (first, last) = (x[0], x[n - 1]);
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));

        let x0 = ext[0];
        self.filter_from(&mut ext, x0);
        ext.reverse();
        let x0 = ext[0];
        self.filter_from(&mut ext, x0);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

/// Digital Butterworth band-pass of prototype order `order`, designed through
/// the bilinear transform with pre-warped band edges.
pub fn butterworth_bandpass(order: usize, low: f64, high: f64, rate: f64) -> Result<Sos> {
    if !(low > 0.0 && low < high && high < rate / 2.0) || order == 0 || !order.is_multiple_of(2) {
        return Err(PrepError::InvalidBand { low, high, rate });
    }
    let fs2 = 2.0 * rate;
    let w_low = fs2 * (PI * low / rate).tan();
    let w_high = fs2 * (PI * high / rate).tan();
    let bw = w_high - w_low;
    let w0_sq = w_low * w_high;

    // Analog prototype poles in the upper half plane (conjugates implied).
    // Each maps to two band-pass poles; keep the upper-half-plane member of
    // each conjugate pair.
    let mut analog_poles = Vec::with_capacity(order);
    for k in 0..order {
        let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let p = Complex64::from_polar(1.0, theta);
        let half = p * (bw / 2.0);
        let disc = (half * half - w0_sq).sqrt();
        for bp in [half + disc, half - disc] {
            if bp.im >= 0.0 {
                analog_poles.push(bp);
            }
        }
    }
    // Even prototype orders only: no real prototype pole, so every band-pass
    // pole has a conjugate partner and pairs into one biquad.
    let mut sections: Vec<Biquad> = analog_poles
        .iter()
        .filter(|p| p.im > 1e-12 * p.norm())
        .map(|&p| {
            let z = (fs2 + p) / (fs2 - p);
            Biquad {
                // One zero at z = 1 (s = 0) and one at z = -1 (s = ∞).
                b: [1.0, 0.0, -1.0],
                a: [1.0, -2.0 * z.re, z.norm_sqr()],
            }
        })
        .collect();
    if sections.len() != order {
        return Err(PrepError::InvalidBand { low, high, rate });
    }
    sections.sort_by(|a, b| a.a[2].total_cmp(&b.a[2]));

    // Unit gain at the digital image of the analog centre frequency.
    let centre = 2.0 * (w0_sq.sqrt() / fs2).atan() * rate / (2.0 * PI);
    let mut sos = Sos { sections };
    let g = sos.response(centre, rate).norm();
    let per_section = g.powf(-1.0 / order as f64);
    for s in &mut sos.sections {
        s.b.iter_mut().for_each(|v| *v *= per_section);
    }
    Ok(sos)
}

/// Zero-phase 4th-order Butterworth band-pass.
pub fn bandpass(trace: &SignalTrace, low: f64, high: f64) -> Result<SignalTrace> {
    let sos = butterworth_bandpass(BUTTERWORTH_ORDER, low, high, trace.rate)?;
    let samples = sos.filtfilt(&trace.samples);
    Ok(trace.derive(samples, trace.rate, PrepStage::Bandpass))
}
