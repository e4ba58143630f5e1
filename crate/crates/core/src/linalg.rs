//! Small numerical kernels shared by the modules: matrix exponential,
//! banded Cholesky, finite-difference stencils and quadrature.

use nalgebra::{DMatrix, Matrix4};

use crate::error::{Error, Result};

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Matrix exponential by scaling and squaring with a degree-13 Pade approximant.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let theta13 = 5.371920351148152;
    let squarings = if norm1 > theta13 {
        (norm1 / theta13).log2().ceil() as i32
    } else {
        0
    };
    let a = a / 2f64.powi(squarings);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a * (u_inner + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let v_inner = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = v_inner + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Pade denominator is invertible");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

pub fn expm4(a: &Matrix4<f64>) -> Matrix4<f64> {
    let d = DMatrix::from_column_slice(4, 4, a.as_slice());
    Matrix4::from_column_slice(expm(&d).as_slice())
}

/// Symmetric positive definite matrix stored by its lower band.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    // row-major: data[i * (bw + 1) + (i - j)] holds A[i][j] for i - bw <= j <= i
    data: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Adds `v` to entry (i, j) with i >= j.
    pub fn add_lower(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i >= j && i - j <= self.bw, "entry ({i}, {j}) outside band");
        self.data[i * (self.bw + 1) + (i - j)] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[i * (self.bw + 1) + (i - j)]
        }
    }

    /// In-place Cholesky factorization followed by a solve.
    pub fn solve(mut self, rhs: &[f64]) -> Result<Vec<f64>> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let max_diag = (0..n).map(|i| self.data[i * w]).fold(0.0, f64::max);
        let floor = 1e-14 * max_diag.max(f64::MIN_POSITIVE);
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut sum = self.data[i * w + (i - j)];
                for k in k0..j {
                    sum -= self.data[i * w + (i - k)] * self.data[j * w + (j - k)];
                }
                if i == j {
                    if sum <= floor {
                        return Err(Error::SingularNormalEquations);
                    }
                    self.data[i * w] = sum.sqrt();
                } else {
                    self.data[i * w + (i - j)] = sum / self.data[j * w];
                }
            }
        }
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut sum = y[i];
            for k in i.saturating_sub(bw)..i {
                sum -= self.data[i * w + (i - k)] * y[k];
            }
            y[i] = sum / self.data[i * w];
        }
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in (i + 1)..n.min(i + bw + 1) {
                sum -= self.data[k * w + (k - i)] * y[k];
            }
            y[i] = sum / self.data[i * w];
        }
        Ok(y)
    }
}

/// Second-order first derivative of equally spaced samples, one-sided at the ends.
pub fn diff2<T>(f: &[T], h: f64) -> Vec<T>
where
    T: Copy
        + std::ops::Sub<Output = T>
        + std::ops::Add<Output = T>
        + std::ops::Mul<f64, Output = T>,
{
    let n = f.len();
    assert!(n >= 3, "need at least three samples");
    let mut out = Vec::with_capacity(n);
    out.push(((f[1] - f[0]) * 4.0 - (f[2] - f[0])) * (0.5 / h));
    for j in 1..n - 1 {
        out.push((f[j + 1] - f[j - 1]) * (0.5 / h));
    }
    out.push(((f[n - 1] - f[n - 2]) * 4.0 - (f[n - 1] - f[n - 3])) * (0.5 / h));
    out
}

const D4_EDGE0: [f64; 5] = [-25.0 / 12.0, 4.0, -3.0, 4.0 / 3.0, -0.25];
const D4_EDGE1: [f64; 5] = [-0.25, -5.0 / 6.0, 1.5, -0.5, 1.0 / 12.0];

/// Fourth-order first derivative, with one-sided five-point stencils near the ends.
pub fn diff4<T>(f: &[T], h: f64) -> Vec<T>
where
    T: Copy
        + std::ops::Sub<Output = T>
        + std::ops::Add<Output = T>
        + std::ops::Mul<f64, Output = T>,
{
    let n = f.len();
    assert!(n >= 5, "need at least five samples");
    let edge = |idx: [usize; 5], c: &[f64; 5], sign: f64| {
        // the coefficients sum to zero, so constants are differentiated exactly
        let mut acc = (f[idx[1]] - f[idx[0]]) * c[1];
        for k in 2..5 {
            acc = acc + (f[idx[k]] - f[idx[0]]) * c[k];
        }
        acc * (sign / h)
    };
    let mut out = Vec::with_capacity(n);
    out.push(edge([0, 1, 2, 3, 4], &D4_EDGE0, 1.0));
    out.push(edge([0, 1, 2, 3, 4], &D4_EDGE1, 1.0));
    for j in 2..n - 2 {
        out.push((f[j - 2] - f[j - 1] * 8.0 + f[j + 1] * 8.0 - f[j + 2]) * (1.0 / (12.0 * h)));
    }
    out.push(edge([n - 1, n - 2, n - 3, n - 4, n - 5], &D4_EDGE1, -1.0));
    out.push(edge([n - 1, n - 2, n - 3, n - 4, n - 5], &D4_EDGE0, -1.0));
    out
}

/// Composite trapezoid weights for `n` equally spaced nodes.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    if n > 0 {
        w[0] = 0.5 * h;
        w[n - 1] = 0.5 * h;
    }
    w
}

/// Least-squares line through `(x, y)`, returned as (slope, intercept).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

pub fn max_abs4(m: &Matrix4<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}
