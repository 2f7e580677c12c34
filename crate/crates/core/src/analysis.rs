// Copyright 2026 cqed-chem Contributors
// SPDX-License-Identifier: Apache-2.0

//! Statistics over sampled curves.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Pearson correlation of two equally long series. `NaN` when either is
/// constant or the lengths differ.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    if x.len() != y.len() || x.len() < 2 {
        return f64::NAN;
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}

/// Frequency (cycles per time unit) of the largest non-DC Fourier component
/// of a uniformly sampled series with spacing `dt`.
pub fn dominant_frequency(x: &[f64], dt: f64) -> Option<f64> {
    let n = x.len();
    if n < 4 || !(dt > 0.0) {
        return None;
    }
    let m = mean(x);
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v - m, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (k, mag) = (1..=n / 2)
        .map(|k| (k, buf[k].norm()))
        .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    (k > 0 && mag > 0.0).then(|| k as f64 / (n as f64 * dt))
}

/// Mean of the last `fraction` of the samples.
pub fn tail_mean(x: &[f64], fraction: f64) -> f64 {
    let take = ((x.len() as f64 * fraction).ceil() as usize).clamp(1, x.len().max(1));
    mean(&x[x.len().saturating_sub(take)..])
}
