//! Deterministic dataset builders shared by the codec benchmarks. No
//! external RNG: a fixed xorshift keeps every run byte-identical.

use tcz_core::TimeSeriesMatrix;

/// Minimal xorshift64 generator for reproducible benchmark inputs.
pub struct DetRng(u64);

impl DetRng {
    pub fn new(seed: u64) -> Self {
        DetRng(seed.max(1))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        self.0
    }

    /// Uniform in [-1, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    }
}

/// Dense m x t matrix with entries in [-scale, scale).
pub fn dense(m: usize, t: usize, scale: f64, seed: u64) -> TimeSeriesMatrix {
    let mut rng = DetRng::new(seed);
    let values = (0..m * t).map(|_| scale * rng.next_f64()).collect();
    TimeSeriesMatrix::new(m, t, values).expect("generated values are finite")
}

/// Meter-shaped matrix: each row repeats one of `patterns` window-limited
/// shapes, giving low rank and a high share of exact zeros.
pub fn meter_like(m: usize, t: usize, patterns: usize, seed: u64) -> TimeSeriesMatrix {
    let mut rng = DetRng::new(seed);
    let window = t / 10;
    let shapes: Vec<Vec<f64>> = (0..patterns)
        .map(|p| {
            let amplitude = 40.0 * 0.8f64.powi(p as i32);
            (0..window)
                .map(|_| amplitude * (0.6 + 0.4 * rng.next_f64()))
                .collect()
        })
        .collect();
    let mut values = vec![0.0; m * t];
    for row in 0..m {
        let p = row % patterns;
        let start = (p * (t - window)) / patterns.max(1);
        for (offset, &v) in shapes[p].iter().enumerate() {
            values[row * t + start + offset] = v;
        }
    }
    TimeSeriesMatrix::new(m, t, values).expect("generated values are finite")
}
