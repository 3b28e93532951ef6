//! Truncated singular value decomposition of sensor matrices.
//!
//! [`svd`] factors an m x t matrix as `X = U diag(sigma) V^T` with
//! `k = min(m, t)` columns, singular values sorted descending, and a fixed
//! sign convention (the largest-magnitude entry of each left singular vector
//! is non-negative). The decomposition runs single-threaded with a fixed
//! operation order, so repeated calls on the same input are bit-identical.
//!
//! The core routine is the classic Golub-Kahan-Reinsch algorithm:
//! Householder bidiagonalization followed by implicit-shift QR on the
//! bidiagonal form. Matrices with fewer rows than columns are factored
//! through their transpose.

use crate::error::{Error, Result};
use crate::matrix::TimeSeriesMatrix;

/// QR sweeps allowed per singular value before giving up.
const MAX_SWEEPS: usize = 60;

/// Rank-k factors of an m x t matrix: `u` is m x k, `v` is t x k, both
/// row-major with orthonormal columns; `sigma` is descending and
/// non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    m: usize,
    t: usize,
    k: usize,
    u: Vec<f64>,
    sigma: Vec<f64>,
    v: Vec<f64>,
}

impl SvdFactors {
    /// Shape (m, t) of the matrix these factors decompose.
    pub fn source_shape(&self) -> (usize, usize) {
        (self.m, self.t)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Left singular vectors, m x k row-major.
    pub fn u(&self) -> &[f64] {
        &self.u
    }

    /// Singular values, descending.
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Right singular vectors, t x k row-major.
    pub fn v(&self) -> &[f64] {
        &self.v
    }

    /// Keeps the first `k` singular triplets.
    pub fn truncate(&self, k: usize) -> Result<SvdFactors> {
        if k < 1 || k > self.k {
            return Err(Error::KOutOfRange { k, max: self.k });
        }
        let mut u = Vec::with_capacity(self.m * k);
        for row in 0..self.m {
            u.extend_from_slice(&self.u[row * self.k..row * self.k + k]);
        }
        let mut v = Vec::with_capacity(self.t * k);
        for row in 0..self.t {
            v.extend_from_slice(&self.v[row * self.k..row * self.k + k]);
        }
        Ok(SvdFactors {
            m: self.m,
            t: self.t,
            k,
            u,
            sigma: self.sigma[..k].to_vec(),
            v,
        })
    }

    /// Multiplies the factors back into a dense m x t matrix.
    pub fn reconstruct(&self) -> TimeSeriesMatrix {
        TimeSeriesMatrix::from_parts(
            self.m,
            self.t,
            reconstruct_values(&self.u, &self.sigma, &self.v, self.m, self.t),
        )
    }
}

/// `sum_l sigma_l u_l v_l^T` for arbitrary (not necessarily orthonormal)
/// factor arrays, as produced by lossy decoding. Callers owning untrusted
/// factors must validate the result before wrapping it in a matrix.
pub(crate) fn reconstruct_values(
    u: &[f64],
    sigma: &[f64],
    v: &[f64],
    m: usize,
    t: usize,
) -> Vec<f64> {
    let k = sigma.len();
    let mut out = vec![0.0; m * t];
    for l in 0..k {
        let s = sigma[l];
        if s == 0.0 {
            continue;
        }
        for i in 0..m {
            let su = s * u[i * k + l];
            let row = &mut out[i * t..(i + 1) * t];
            for (j, cell) in row.iter_mut().enumerate() {
                *cell += su * v[j * k + l];
            }
        }
    }
    out
}

/// Singular values above `rank_tolerance * sigma_1`; an all-zero spectrum
/// has rank zero.
pub fn numerical_rank(sigma: &[f64], rank_tolerance: f64) -> usize {
    let sigma_1 = sigma.first().copied().unwrap_or(0.0);
    if sigma_1 == 0.0 {
        0
    } else {
        sigma
            .iter()
            .filter(|&&s| s > rank_tolerance * sigma_1)
            .count()
    }
}

/// Entries needed to store rank-k factors of an m x t matrix: k left vectors
/// of length m, k singular values, k right vectors of length t.
pub fn storage_entries(m: usize, t: usize, k: usize) -> u64 {
    (m as u64 + 1 + t as u64) * k as u64
}

/// Entry-count compression ratio of rank-k factors versus the dense matrix.
pub fn entry_ratio(m: usize, t: usize, k: usize) -> f64 {
    (m as u64 * t as u64) as f64 / storage_entries(m, t, k) as f64
}

/// Mean absolute difference over all cells of two same-shape matrices.
pub fn mae(a: &TimeSeriesMatrix, b: &TimeSeriesMatrix) -> Result<f64> {
    check_same_shape(a, b)?;
    let sum: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .sum();
    Ok(sum / a.values().len() as f64)
}

/// Largest absolute difference over all cells of two same-shape matrices.
pub fn max_abs_error(a: &TimeSeriesMatrix, b: &TimeSeriesMatrix) -> Result<f64> {
    check_same_shape(a, b)?;
    Ok(a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

fn check_same_shape(a: &TimeSeriesMatrix, b: &TimeSeriesMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: a.shape(),
            found: b.shape(),
        });
    }
    Ok(())
}

/// Full compact SVD with `k = min(m, t)`.
pub fn svd(x: &TimeSeriesMatrix) -> Result<SvdFactors> {
    let (m, t) = x.shape();
    let transpose = m < t;
    let (rows, cols) = if transpose { (t, m) } else { (m, t) };
    let mut a = if transpose {
        x.transposed().values().to_vec()
    } else {
        x.values().to_vec()
    };
    let mut w = vec![0.0; cols];
    let mut v = vec![0.0; cols * cols];
    svdcmp(&mut a, rows, cols, &mut w, &mut v)?;

    // a now holds the left factors of the worked matrix (rows x cols) and v
    // the right factors (cols x cols). When the input was factored through
    // its transpose the roles swap: X = (X^T)^T = V' diag(w) U'^T.
    let (mut u_out, mut v_out) = if transpose { (v, a) } else { (a, v) };
    let k = cols;
    sort_descending(&mut u_out, m, &mut w, &mut v_out, t);
    fix_signs(&mut u_out, m, k, &mut v_out, t);
    Ok(SvdFactors {
        m,
        t,
        k,
        u: u_out,
        sigma: w,
        v: v_out,
    })
}

/// Selection sort, descending by singular value. Strict comparison keeps the
/// original order of tied values, so the result is deterministic.
fn sort_descending(u: &mut [f64], m: usize, sigma: &mut [f64], v: &mut [f64], t: usize) {
    let k = sigma.len();
    for i in 0..k {
        let mut best = i;
        for j in (i + 1)..k {
            if sigma[j] > sigma[best] {
                best = j;
            }
        }
        if best != i {
            sigma.swap(i, best);
            for r in 0..m {
                u.swap(r * k + i, r * k + best);
            }
            for r in 0..t {
                v.swap(r * k + i, r * k + best);
            }
        }
    }
}

/// Flips each singular pair so the largest-magnitude entry of the left
/// vector is non-negative (first such entry on ties).
fn fix_signs(u: &mut [f64], m: usize, k: usize, v: &mut [f64], t: usize) {
    for col in 0..k {
        let mut pivot = 0usize;
        let mut max_abs = 0.0f64;
        for r in 0..m {
            let a = u[r * k + col].abs();
            if a > max_abs {
                max_abs = a;
                pivot = r;
            }
        }
        if u[pivot * k + col] < 0.0 {
            for r in 0..m {
                u[r * k + col] = -u[r * k + col];
            }
            for r in 0..t {
                v[r * k + col] = -v[r * k + col];
            }
        }
    }
}

#[inline]
fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Golub-Kahan-Reinsch SVD of a row-major m x n matrix with m >= n.
///
/// On return `a` holds the left factors (m x n), `w` the unsorted singular
/// values, and `v` the right factors (n x n). Splitting tests compare
/// against `eps * anorm` rather than relying on floating-point absorption.
fn svdcmp(a: &mut [f64], m: usize, n: usize, w: &mut [f64], v: &mut [f64]) -> Result<()> {
    debug_assert!(n >= 1 && m >= n);
    debug_assert!(a.len() == m * n && w.len() == n && v.len() == n * n);

    let mut rv1 = vec![0.0f64; n];
    let mut anorm = 0.0f64;
    let mut g = 0.0f64;
    let mut scale = 0.0f64;
    let mut l = 0usize;

    // Householder reduction to bidiagonal form: w holds the diagonal,
    // rv1 the superdiagonal.
    for i in 0..n {
        l = i + 1;
        rv1[i] = scale * g;
        g = 0.0;
        scale = 0.0;
        if i < m {
            for k in i..m {
                scale += a[k * n + i].abs();
            }
            if scale != 0.0 {
                let mut s = 0.0;
                for k in i..m {
                    a[k * n + i] /= scale;
                    s += a[k * n + i] * a[k * n + i];
                }
                let f = a[i * n + i];
                g = -sign(s.sqrt(), f);
                let h = f * g - s;
                a[i * n + i] = f - g;
                for j in l..n {
                    let mut s = 0.0;
                    for k in i..m {
                        s += a[k * n + i] * a[k * n + j];
                    }
                    let f = s / h;
                    for k in i..m {
                        a[k * n + j] += f * a[k * n + i];
                    }
                }
                for k in i..m {
                    a[k * n + i] *= scale;
                }
            }
        }
        w[i] = scale * g;
        g = 0.0;
        scale = 0.0;
        if i < m && i + 1 != n {
            for k in l..n {
                scale += a[i * n + k].abs();
            }
            if scale != 0.0 {
                let mut s = 0.0;
                for k in l..n {
                    a[i * n + k] /= scale;
                    s += a[i * n + k] * a[i * n + k];
                }
                let f = a[i * n + l];
                g = -sign(s.sqrt(), f);
                let h = f * g - s;
                a[i * n + l] = f - g;
                for k in l..n {
                    rv1[k] = a[i * n + k] / h;
                }
                for j in l..m {
                    let mut s = 0.0;
                    for k in l..n {
                        s += a[j * n + k] * a[i * n + k];
                    }
                    for k in l..n {
                        a[j * n + k] += s * rv1[k];
                    }
                }
                for k in l..n {
                    a[i * n + k] *= scale;
                }
            }
        }
        anorm = anorm.max(w[i].abs() + rv1[i].abs());
    }

    // Accumulate right-hand transformations. g and l carry across
    // iterations: at step i they hold rv1[i + 1] and i + 1.
    for i in (0..n).rev() {
        if i + 1 < n {
            if g != 0.0 {
                // Double division avoids possible underflow.
                for j in l..n {
                    v[j * n + i] = (a[i * n + j] / a[i * n + l]) / g;
                }
                for j in l..n {
                    let mut s = 0.0;
                    for k in l..n {
                        s += a[i * n + k] * v[k * n + j];
                    }
                    for k in l..n {
                        v[k * n + j] += s * v[k * n + i];
                    }
                }
            }
            for j in l..n {
                v[i * n + j] = 0.0;
                v[j * n + i] = 0.0;
            }
        }
        v[i * n + i] = 1.0;
        g = rv1[i];
        l = i;
    }

    // Accumulate left-hand transformations.
    for i in (0..n.min(m)).rev() {
        let l = i + 1;
        g = w[i];
        for j in l..n {
            a[i * n + j] = 0.0;
        }
        if g != 0.0 {
            g = 1.0 / g;
            for j in l..n {
                let mut s = 0.0;
                for k in l..m {
                    s += a[k * n + i] * a[k * n + j];
                }
                let f = (s / a[i * n + i]) * g;
                for k in i..m {
                    a[k * n + j] += f * a[k * n + i];
                }
            }
            for j in i..m {
                a[j * n + i] *= g;
            }
        } else {
            for j in i..m {
                a[j * n + i] = 0.0;
            }
        }
        a[i * n + i] += 1.0;
    }

    // Diagonalize the bidiagonal form by implicit-shift QR.
    let eps = f64::EPSILON;
    for k in (0..n).rev() {
        let mut converged = false;
        for _ in 0..MAX_SWEEPS {
            // Look for a split point; rv1[0] is identically zero, so the
            // scan always terminates.
            let mut l = k;
            let mut flag = true;
            loop {
                if l == 0 || rv1[l].abs() <= eps * anorm {
                    flag = false;
                    break;
                }
                if w[l - 1].abs() <= eps * anorm {
                    break;
                }
                l -= 1;
            }
            if flag {
                // w[l - 1] is negligible: cancel rv1[l] with rotations
                // against column l - 1.
                let nm = l - 1;
                let mut c = 0.0;
                let mut s = 1.0;
                for i in l..=k {
                    let f = s * rv1[i];
                    rv1[i] *= c;
                    if f.abs() <= eps * anorm {
                        break;
                    }
                    let g = w[i];
                    let h = f.hypot(g);
                    w[i] = h;
                    let h = 1.0 / h;
                    c = g * h;
                    s = -f * h;
                    for j in 0..m {
                        let y = a[j * n + nm];
                        let z = a[j * n + i];
                        a[j * n + nm] = y * c + z * s;
                        a[j * n + i] = z * c - y * s;
                    }
                }
            }
            let z = w[k];
            if l == k {
                if z < 0.0 {
                    w[k] = -z;
                    for j in 0..n {
                        v[j * n + k] = -v[j * n + k];
                    }
                }
                converged = true;
                break;
            }

            // Shift from the bottom 2x2 minor.
            let mut x = w[l];
            let nm = k - 1;
            let y = w[nm];
            g = rv1[nm];
            let mut h = rv1[k];
            let mut f = ((y - z) * (y + z) + (g - h) * (g + h)) / (2.0 * h * y);
            g = f.hypot(1.0);
            f = ((x - z) * (x + z) + h * (y / (f + sign(g, f)) - h)) / x;

            // One QR sweep with the shift folded into the rotations.
            let mut c = 1.0;
            let mut s = 1.0;
            for j in l..=nm {
                let i = j + 1;
                g = rv1[i];
                let mut y = w[i];
                h = s * g;
                g *= c;
                let mut z = f.hypot(h);
                rv1[j] = z;
                c = f / z;
                s = h / z;
                f = x * c + g * s;
                g = g * c - x * s;
                h = y * s;
                y *= c;
                for jj in 0..n {
                    let x = v[jj * n + j];
                    let z = v[jj * n + i];
                    v[jj * n + j] = x * c + z * s;
                    v[jj * n + i] = z * c - x * s;
                }
                z = f.hypot(h);
                w[j] = z;
                // The rotation is arbitrary when z is zero.
                if z != 0.0 {
                    let inv = 1.0 / z;
                    c = f * inv;
                    s = h * inv;
                }
                f = c * g + s * y;
                x = c * y - s * g;
                for jj in 0..m {
                    let y = a[jj * n + j];
                    let z = a[jj * n + i];
                    a[jj * n + j] = y * c + z * s;
                    a[jj * n + i] = z * c - y * s;
                }
            }
            rv1[l] = 0.0;
            rv1[k] = f;
            w[k] = x;
        }
        if !converged {
            return Err(Error::SvdDidNotConverge {
                iterations: MAX_SWEEPS,
            });
        }
    }
    Ok(())
}
