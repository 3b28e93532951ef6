//! Shared generators and independent oracles for the integration suites.
//!
//! The oracles deliberately avoid the library's own algorithms: singular
//! values are cross-checked through a Jacobi eigensolver on the Gram matrix
//! and a closed-form 2x2 solution, and the quantizer is checked against
//! naive per-value searches.

#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tcz_core::TimeSeriesMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random dense matrix with entries in [-scale, scale].
pub fn random_matrix(rng: &mut ChaCha8Rng, m: usize, t: usize, scale: f64) -> TimeSeriesMatrix {
    let values: Vec<f64> = (0..m * t).map(|_| rng.gen_range(-scale..scale)).collect();
    TimeSeriesMatrix::new(m, t, values).unwrap()
}

/// Integer-valued rank-r matrix built as a product of small integer
/// factors. Entries stay well below 2^20.
pub fn integer_low_rank(rng: &mut ChaCha8Rng, m: usize, t: usize, r: usize) -> TimeSeriesMatrix {
    let a: Vec<i32> = (0..m * r).map(|_| rng.gen_range(-31..=31)).collect();
    let b: Vec<i32> = (0..r * t).map(|_| rng.gen_range(-31..=31)).collect();
    let mut values = vec![0.0; m * t];
    for i in 0..m {
        for j in 0..t {
            let mut cell = 0i64;
            for l in 0..r {
                cell += a[i * r + l] as i64 * b[l * t + j] as i64;
            }
            values[i * t + j] = cell as f64;
        }
    }
    TimeSeriesMatrix::new(m, t, values).unwrap()
}

/// Smart-meter-shaped synthetic: 80 devices by 4902 timestamps. Each device
/// repeats one of 28 window-limited consumption patterns, so the matrix has
/// numerical rank 28, about 90% zeros, and an exponentially decaying
/// spectrum.
pub fn meter_matrix() -> TimeSeriesMatrix {
    let (m, t) = (80usize, 4902usize);
    let patterns = 28usize;
    let window = 490usize; // 10% of the row is active
    let mut rng = rng(0x5EED_0001);
    let shapes: Vec<Vec<f64>> = (0..patterns)
        .map(|_| (0..window).map(|_| rng.gen_range(0.2..1.0)).collect())
        .collect();
    let mut values = vec![0.0; m * t];
    for d in 0..m {
        let p = d % patterns;
        let start = p * 158; // windows overlap; last one ends at 4756
        let amplitude = 40.0 * 0.78f64.powi(p as i32);
        for j in 0..window {
            values[d * t + start + j] = amplitude * shapes[p][j];
        }
    }
    TimeSeriesMatrix::new(m, t, values).unwrap()
}

/// Micro-grid-shaped synthetic: 442 devices by 1440 minutes, dense. Each
/// device is a base load plus two daily harmonics plus noise.
pub fn microgrid_matrix() -> TimeSeriesMatrix {
    let (m, t) = (442usize, 1440usize);
    let mut rng = rng(0x5EED_0002);
    let tau = std::f64::consts::TAU;
    let mut values = vec![0.0; m * t];
    for d in 0..m {
        let base = rng.gen_range(20.0..60.0);
        let a1 = rng.gen_range(5.0..25.0);
        let p1 = rng.gen_range(0.0..tau);
        let a2 = rng.gen_range(2.0..10.0);
        let p2 = rng.gen_range(0.0..tau);
        for j in 0..t {
            let x = tau * j as f64 / t as f64;
            let noise = rng.gen_range(-0.8..0.8);
            values[d * t + j] = base + a1 * (x + p1).sin() + a2 * (2.0 * x + p2).sin() + noise;
        }
    }
    TimeSeriesMatrix::new(m, t, values).unwrap()
}

/// Singular values of `x` through the Gram matrix of the smaller side,
/// diagonalized with cyclic Jacobi rotations: an algorithm independent of
/// the bidiagonal-QR path under test. Descending.
pub fn gram_singular_values(x: &TimeSeriesMatrix) -> Vec<f64> {
    let (m, t) = x.shape();
    let n = m.min(t);
    // Gram of the smaller side: X X^T when m <= t, else X^T X.
    let mut g = vec![0.0f64; n * n];
    for a in 0..n {
        for b in 0..n {
            let mut dot = 0.0;
            if m <= t {
                for j in 0..t {
                    dot += x.get(a, j) * x.get(b, j);
                }
            } else {
                for i in 0..m {
                    dot += x.get(i, a) * x.get(i, b);
                }
            }
            g[a * n + b] = dot;
        }
    }
    let mut eigen = jacobi_eigenvalues(g, n);
    for lambda in &mut eigen {
        *lambda = lambda.max(0.0).sqrt();
    }
    eigen
}

/// Eigenvalues of a symmetric n x n matrix by cyclic Jacobi sweeps,
/// descending.
pub fn jacobi_eigenvalues(mut a: Vec<f64>, n: usize) -> Vec<f64> {
    assert_eq!(a.len(), n * n);
    let scale: f64 = a.iter().map(|v| v * v).sum::<f64>().max(1e-300);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q] * a[p * n + q])
            .sum();
        if off <= 1e-26 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let tan = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let tan = if theta == 0.0 { 1.0 } else { tan };
                let cos = 1.0 / (tan * tan + 1.0).sqrt();
                let sin = tan * cos;
                // Rotate rows and columns p, q.
                for i in 0..n {
                    let aip = a[i * n + p];
                    let aiq = a[i * n + q];
                    a[i * n + p] = cos * aip - sin * aiq;
                    a[i * n + q] = sin * aip + cos * aiq;
                }
                for i in 0..n {
                    let api = a[p * n + i];
                    let aqi = a[q * n + i];
                    a[p * n + i] = cos * api - sin * aqi;
                    a[q * n + i] = sin * api + cos * aqi;
                }
            }
        }
    }
    let mut eigen: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eigen.sort_by(|x, y| y.partial_cmp(x).unwrap());
    eigen
}

/// Closed-form singular values of a 2x2 matrix [[a, b], [c, d]],
/// descending.
pub fn closed_form_2x2(a: f64, b: f64, c: f64, d: f64) -> [f64; 2] {
    // Eigenvalues of the Gram matrix via trace and determinant.
    let g11 = a * a + b * b;
    let g22 = c * c + d * d;
    let g12 = a * c + b * d;
    let trace = g11 + g22;
    let gap = ((g11 - g22) * (g11 - g22) + 4.0 * g12 * g12).sqrt();
    let l1 = 0.5 * (trace + gap);
    let l2 = (0.5 * (trace - gap)).max(0.0);
    [l1.sqrt(), l2.sqrt()]
}

/// Frobenius norm of the difference of two matrices.
pub fn frobenius_error(a: &TimeSeriesMatrix, b: &TimeSeriesMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Exact power of two for oracle arithmetic.
pub fn pow2(e: i32) -> f64 {
    (e as f64).exp2()
}
