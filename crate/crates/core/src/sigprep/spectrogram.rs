use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use super::{PrepError, Result, EPOCH_SAMPLES};

pub const WINDOW_SAMPLES: usize = 200;
pub const HOP_SAMPLES: usize = 100;
pub const FFT_SIZE: usize = 256;
pub const LOG_FLOOR: f64 = 1e-12;

/// Log-magnitude time-frequency image of one epoch, row-major
/// `frame_count x bin_count`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Spectrogram {
    pub frames: Vec<f64>,
    pub frame_count: usize,
    pub bin_count: usize,
}

impl Spectrogram {
    pub fn shape(&self) -> (usize, usize) {
        (self.frame_count, self.bin_count)
    }

    pub fn get(&self, frame: usize, bin: usize) -> f64 {
        self.frames[frame * self.bin_count + bin]
    }

    pub fn row(&self, frame: usize) -> &[f64] {
        &self.frames[frame * self.bin_count..(frame + 1) * self.bin_count]
    }
}

fn hamming(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// 2-s Hamming windows with 1-s hop, zero-padded 256-point FFT, natural log
/// of the magnitude floored at 1e-12. A 30-s frame at 100 Hz gives 29 x 129.
pub fn spectrogram(frame: &[f32]) -> Result<Spectrogram> {
    if frame.len() != EPOCH_SAMPLES {
        return Err(PrepError::WrongFrameLength {
            expected: EPOCH_SAMPLES,
            got: frame.len(),
        });
    }
    let window = hamming(WINDOW_SAMPLES);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(FFT_SIZE);
    let frame_count = (EPOCH_SAMPLES - WINDOW_SAMPLES) / HOP_SAMPLES + 1;
    let bin_count = FFT_SIZE / 2 + 1;
    let mut frames = Vec::with_capacity(frame_count * bin_count);
    let mut buf = vec![Complex64::new(0.0, 0.0); FFT_SIZE];
    for t in 0..frame_count {
        let seg = &frame[t * HOP_SAMPLES..t * HOP_SAMPLES + WINDOW_SAMPLES];
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for ((slot, &x), w) in buf.iter_mut().zip(seg).zip(&window) {
            slot.re = f64::from(x) * w;
        }
        fft.process(&mut buf);
        frames.extend(buf[..bin_count].iter().map(|c| c.norm().max(LOG_FLOOR).ln()));
    }
    Ok(Spectrogram {
        frames,
        frame_count,
        bin_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape() {
        let frame: Vec<f32> = (0..EPOCH_SAMPLES).map(|i| (i as f32 * 0.3).sin()).collect();
        let s = spectrogram(&frame).unwrap();
        assert_eq!(s.shape(), (29, 129));
        assert_eq!(s.frames.len(), 29 * 129);
    }

    #[test]
    fn zero_frame_hits_floor() {
        let s = spectrogram(&vec![0.0; EPOCH_SAMPLES]).unwrap();
        assert!(s.frames.iter().all(|&v| v == LOG_FLOOR.ln()));
    }

    #[test]
    fn impulse_is_finite() {
        let mut frame = vec![0.0; EPOCH_SAMPLES];
        frame[1500] = 1.0;
        let s = spectrogram(&frame).unwrap();
        assert!(s.frames.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn tone_peaks_in_expected_bin() {
        // 12.5 Hz at 100 Hz lands on bin 32 of a 256-point FFT.
        let frame: Vec<f32> = (0..EPOCH_SAMPLES)
            .map(|i| (2.0 * std::f32::consts::PI * 12.5 * i as f32 / 100.0).sin())
            .collect();
        let s = spectrogram(&frame).unwrap();
        let row = s.row(10);
        let peak = crate::types::argmax(row);
        assert_eq!(peak, 32);
    }

    #[test]
    fn wrong_length() {
        assert!(matches!(
            spectrogram(&[0.0; 100]),
            Err(PrepError::WrongFrameLength { got: 100, .. })
        ));
    }
}
