//! Surface profiles near the knot, singular points of the characteristic
//! foliation, the Thurston-Bennequin count, and the flattening coordinate
//! change `x' = x - q(theta) y`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector4};
use serde::Serialize;

use crate::error::{Error, Result};

/// Default zero tolerance for `b(theta0)` and for `|(a, b)|`.
pub const ZERO_TOL: f64 = 1e-9;

/// A 1-periodic scalar function with its first two derivatives.
pub trait PeriodicFn: Send + Sync + fmt::Debug {
    /// Returns `[f, f', f'']` at `theta`.
    fn jet(&self, theta: f64) -> [f64; 3];

    fn value(&self, theta: f64) -> f64 {
        self.jet(theta)[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl PeriodicFn for Constant {
    fn jet(&self, _theta: f64) -> [f64; 3] {
        [self.0, 0.0, 0.0]
    }
}

/// `mean + sum_k cos[k-1] cos(2 pi k theta) + sin[k-1] sin(2 pi k theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPoly {
    pub mean: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl TrigPoly {
    pub fn new(mean: f64, cos: Vec<f64>, sin: Vec<f64>) -> Self {
        Self { mean, cos, sin }
    }

    /// Band-limited interpolant of samples at `theta_k = k / n`.
    ///
    /// For even `n` the Nyquist mode is split evenly, which keeps the
    /// interpolant real and its derivatives well defined.
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        let nf = n as f64;
        let kmax = n / 2;
        let mut cos = Vec::with_capacity(kmax);
        let mut sin = Vec::with_capacity(kmax);
        let mean = values.iter().sum::<f64>() / nf;
        for k in 1..=kmax {
            let (mut c, mut s) = (0.0, 0.0);
            for (j, v) in values.iter().enumerate() {
                let arg = TAU * (k * j % n) as f64 / nf;
                c += v * arg.cos();
                s += v * arg.sin();
            }
            if n % 2 == 0 && k == kmax {
                cos.push(c / nf);
                sin.push(0.0);
            } else {
                cos.push(2.0 * c / nf);
                sin.push(2.0 * s / nf);
            }
        }
        Self { mean, cos, sin }
    }
}

impl PeriodicFn for TrigPoly {
    fn jet(&self, theta: f64) -> [f64; 3] {
        let mut out = [self.mean, 0.0, 0.0];
        for (i, (c, s)) in self.cos.iter().zip(&self.sin).enumerate() {
            let w = TAU * (i + 1) as f64;
            let (sn, cs) = (w * theta).sin_cos();
            out[0] += c * cs + s * sn;
            out[1] += w * (-c * sn + s * cs);
            out[2] -= w * w * (c * cs + s * sn);
        }
        out
    }
}

/// Quintic smoothstep on [0, 1] with its first two derivatives.
fn smoothstep(z: f64) -> [f64; 3] {
    if z <= 0.0 {
        [0.0, 0.0, 0.0]
    } else if z >= 1.0 {
        [1.0, 0.0, 0.0]
    } else {
        let z2 = z * z;
        [
            z2 * z * (10.0 - 15.0 * z + 6.0 * z2),
            30.0 * z2 * (1.0 - z) * (1.0 - z),
            60.0 * z * (1.0 - z) * (1.0 - 2.0 * z),
        ]
    }
}

/// Offset function that equals `d` on the window, blends into
/// `sin(2 pi d) / 2 pi` over the next window width, and is 1-periodic.
#[derive(Debug, Clone, Copy)]
struct WindowedOffset {
    theta_k: f64,
    window: f64,
}

impl WindowedOffset {
    fn jet(&self, theta: f64) -> [f64; 3] {
        let d = theta - self.theta_k;
        let d = d - d.round();
        let g = [
            (TAU * d).sin() / TAU,
            (TAU * d).cos(),
            -TAU * (TAU * d).sin(),
        ];
        if self.window == 0.0 {
            return g;
        }
        let w = self.window;
        let sgn = d.signum();
        let [chi, chi1, chi2] = {
            let [s0, s1, s2] = smoothstep((d.abs() - w) / w);
            [s0, s1 * sgn / w, s2 / (w * w)]
        };
        [
            (1.0 - chi) * d + chi * g[0],
            (1.0 - chi) + chi * g[1] + chi1 * (g[0] - d),
            chi * g[2] + chi2 * (g[0] - d) + 2.0 * chi1 * (g[1] - 1.0),
        ]
    }
}

/// `b = -a * offset / 2`, the elliptic normal form near `theta_k`.
#[derive(Debug, Clone)]
pub struct EllipticB {
    a: Arc<dyn PeriodicFn>,
    offset: WindowedOffset,
}

impl PeriodicFn for EllipticB {
    fn jet(&self, theta: f64) -> [f64; 3] {
        let a = self.a.jet(theta);
        let p = self.offset.jet(theta);
        [
            -0.5 * a[0] * p[0],
            -0.5 * (a[1] * p[0] + a[0] * p[1]),
            -0.5 * (a[2] * p[0] + 2.0 * a[1] * p[1] + a[0] * p[2]),
        ]
    }
}

/// The loop `theta -> (a(theta), b(theta))` describing how the spanning
/// surface wraps around the knot.
#[derive(Debug, Clone)]
pub struct SurfaceProfile {
    pub a: Arc<dyn PeriodicFn>,
    pub b: Arc<dyn PeriodicFn>,
}

impl SurfaceProfile {
    pub fn new(a: impl PeriodicFn + 'static, b: impl PeriodicFn + 'static) -> Self {
        Self {
            a: Arc::new(a),
            b: Arc::new(b),
        }
    }

    /// `(cos 2 pi theta, sin 2 pi theta)`.
    pub fn circle() -> Self {
        Self::new(
            TrigPoly::new(0.0, vec![1.0], vec![0.0]),
            TrigPoly::new(0.0, vec![0.0], vec![1.0]),
        )
    }

    /// Trigonometric interpolation of a uniform sample table over [0, 1).
    pub fn from_samples(theta: &[f64], a: &[f64], b: &[f64]) -> Result<Self> {
        let n = theta.len();
        if n < 16 || a.len() != n || b.len() != n {
            return Err(Error::Parse(format!(
                "profile needs at least 16 rows of theta,a,b (got {n})"
            )));
        }
        for (k, t) in theta.iter().enumerate() {
            if (t - k as f64 / n as f64).abs() > 1e-9 {
                return Err(Error::Parse(format!(
                    "theta grid is not uniform on [0,1) at row {k}"
                )));
            }
        }
        Ok(Self::new(
            TrigPoly::from_samples(a),
            TrigPoly::from_samples(b),
        ))
    }

    /// Positive scalar multiple `(mu a, mu b)`.
    pub fn scaled(&self, mu: f64) -> Self {
        #[derive(Debug)]
        struct Scaled(Arc<dyn PeriodicFn>, f64);
        impl PeriodicFn for Scaled {
            fn jet(&self, theta: f64) -> [f64; 3] {
                self.0.jet(theta).map(|v| v * self.1)
            }
        }
        Self {
            a: Arc::new(Scaled(self.a.clone(), mu)),
            b: Arc::new(Scaled(self.b.clone(), mu)),
        }
    }

    pub fn a(&self, theta: f64) -> f64 {
        self.a.value(theta)
    }

    pub fn b(&self, theta: f64) -> f64 {
        self.b.value(theta)
    }

    /// `[q, q', q'']` for `q = a / b`.
    pub fn q_jet(&self, theta: f64) -> Result<[f64; 3]> {
        let [a, a1, a2] = self.a.jet(theta);
        let [b, b1, b2] = self.b.jet(theta);
        if b.abs() < ZERO_TOL {
            return Err(Error::SingularAngle { theta });
        }
        let w = a1 * b - a * b1;
        Ok([
            a / b,
            w / (b * b),
            (a2 * b - a * b2) / (b * b) - 2.0 * b1 * w / (b * b * b),
        ])
    }

    pub fn q(&self, theta: f64) -> Result<f64> {
        Ok(self.q_jet(theta)?[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Elliptic,
    Hyperbolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingularityInfo {
    pub theta0: f64,
    pub sign: Sign,
    pub kind: Kind,
    /// `b'(theta0) / a(theta0)`.
    pub c: f64,
}

pub fn classify_singularity(profile: &SurfaceProfile, theta0: f64) -> Result<SingularityInfo> {
    classify_singularity_with_tol(profile, theta0, ZERO_TOL)
}

pub fn classify_singularity_with_tol(
    profile: &SurfaceProfile,
    theta0: f64,
    tol: f64,
) -> Result<SingularityInfo> {
    let [b, b1, _] = profile.b.jet(theta0);
    if b.abs() > tol {
        return Err(Error::NotASingularPoint {
            theta: theta0,
            b: b.abs(),
        });
    }
    let a = profile.a(theta0);
    if a.abs() <= tol {
        return Err(Error::LoopThroughOrigin { theta: theta0 });
    }
    let c = b1 / a;
    if c.abs() <= tol || (c + 1.0).abs() <= tol {
        return Err(Error::Degenerate { c });
    }
    Ok(SingularityInfo {
        theta0: theta0.rem_euclid(1.0),
        sign: if a < 0.0 {
            Sign::Positive
        } else {
            Sign::Negative
        },
        kind: if c * (c + 1.0) < 0.0 {
            Kind::Elliptic
        } else {
            Kind::Hyperbolic
        },
        c,
    })
}

/// Linear part of the characteristic foliation's vector field at a singular point.
pub fn linearization_matrix(b_coeff: f64, c: f64) -> Matrix2<f64> {
    Matrix2::new(-c, -b_coeff, 0.0, 1.0 + c)
}

/// Winding number of the profile loop together with the distance of the
/// accumulated angle from the nearest multiple of a full turn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Winding {
    pub degree: i64,
    pub residual: f64,
}

fn angle_step(p: (f64, f64), q: (f64, f64)) -> f64 {
    let cross = p.0 * q.1 - p.1 * q.0;
    let dot = p.0 * q.0 + p.1 * q.1;
    cross.atan2(dot)
}

pub fn winding_number(profile: &SurfaceProfile, n_samples: usize, tol: f64) -> Result<Winding> {
    let n = n_samples.max(4);
    let point = |theta: f64| -> Result<(f64, f64)> {
        let p = (profile.a(theta), profile.b(theta));
        if p.0.hypot(p.1) < tol {
            return Err(Error::LoopThroughOrigin { theta });
        }
        Ok(p)
    };

    fn accumulate(
        point: &dyn Fn(f64) -> Result<(f64, f64)>,
        t0: f64,
        p0: (f64, f64),
        t1: f64,
        p1: (f64, f64),
        depth: usize,
    ) -> Result<f64> {
        let step = angle_step(p0, p1);
        if step.abs() <= PI / 2.0 {
            return Ok(step);
        }
        if depth == 0 {
            return Err(Error::LoopThroughOrigin {
                theta: 0.5 * (t0 + t1),
            });
        }
        let tm = 0.5 * (t0 + t1);
        let pm = point(tm)?;
        Ok(accumulate(point, t0, p0, tm, pm, depth - 1)?
            + accumulate(point, tm, pm, t1, p1, depth - 1)?)
    }

    let mut total = 0.0;
    let mut prev = point(0.0)?;
    for k in 1..=n {
        let t1 = k as f64 / n as f64;
        let cur = point(t1)?;
        total += accumulate(&point, (k - 1) as f64 / n as f64, prev, t1, cur, 40)?;
        prev = cur;
    }
    let turns = total / TAU;
    let degree = turns.round();
    Ok(Winding {
        degree: degree as i64,
        residual: (turns - degree).abs(),
    })
}

/// Degree of `theta -> (a, b)` about the origin.
pub fn tb_degree(profile: &SurfaceProfile, n_samples: usize) -> Result<i64> {
    let w = winding_number(profile, n_samples, ZERO_TOL)?;
    debug_assert!(w.residual < 0.1);
    Ok(w.degree)
}

/// Zeros of `a` on [0, 1), located by sign changes on a sample grid and
/// polished by bisection.
pub fn zeros_of_a(profile: &SurfaceProfile, n_samples: usize, tol: f64) -> Result<Vec<f64>> {
    let n = n_samples.max(16);
    let vals: Vec<f64> = (0..=n).map(|k| profile.a(k as f64 / n as f64)).collect();
    let mut zeros = Vec::new();
    for k in 0..n {
        let (t0, t1) = (k as f64 / n as f64, (k + 1) as f64 / n as f64);
        let (v0, v1) = (vals[k], vals[k + 1]);
        if v0 == 0.0 {
            zeros.push(t0);
            continue;
        }
        if v0 * v1 < 0.0 {
            let (mut lo, mut hi, mut flo) = (t0, t1, v0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fm = profile.a(mid);
                if fm == 0.0 || hi - lo < 1e-15 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            zeros.push(0.5 * (lo + hi));
        } else if v1 != 0.0 {
            // no sign change: look for a double root hiding inside the cell
            let mid = 0.5 * (t0 + t1);
            let [am, a1, a2] = profile.a.jet(mid);
            if a2 != 0.0 {
                let tv = mid - a1 / a2;
                if tv > t0 && tv < t1 && profile.a(tv).abs() < tol && am.signum() == v0.signum() {
                    return Err(Error::TangentZero { theta: tv });
                }
            }
        }
    }
    for &z in &zeros {
        if profile.a.jet(z)[1].abs() < tol {
            return Err(Error::TangentZero { theta: z });
        }
    }
    Ok(zeros)
}

/// `sum sign(-delta a'(theta))` over zeros of `a` where `sign b = delta`.
pub fn tb_signed_count(profile: &SurfaceProfile, delta_sign: Sign) -> Result<i64> {
    let delta = match delta_sign {
        Sign::Positive => 1.0,
        Sign::Negative => -1.0,
    };
    let mut count = 0i64;
    for z in zeros_of_a(profile, 4096, ZERO_TOL)? {
        let b = profile.b(z);
        if b.abs() < ZERO_TOL {
            return Err(Error::LoopThroughOrigin { theta: z });
        }
        if b.signum() == delta {
            count += (-delta * profile.a.jet(z)[1]).signum() as i64;
        }
    }
    Ok(count)
}

/// Profile with `b = -a (theta - theta_k) / 2` on `|theta - theta_k| <= window`.
///
/// Outside the window `b` is blended into `-a sin(2 pi (theta - theta_k)) / 4 pi`,
/// so `b` also vanishes at `theta_k + 1/2`, which is a hyperbolic point of
/// the opposite sign. `window` must lie in `[0, 1/4]`.
pub fn elliptic_normal_profile(
    theta_k: f64,
    a: Arc<dyn PeriodicFn>,
    window: f64,
) -> Result<SurfaceProfile> {
    if !(0.0..=0.25).contains(&window) {
        return Err(Error::InvalidParameter(format!(
            "window {window} outside [0, 1/4]"
        )));
    }
    for t in [theta_k, theta_k + 0.5] {
        if a.value(t).abs() < ZERO_TOL {
            return Err(Error::LoopThroughOrigin { theta: t });
        }
    }
    let b = EllipticB {
        a: a.clone(),
        offset: WindowedOffset { theta_k, window },
    };
    Ok(SurfaceProfile { a, b: Arc::new(b) })
}

/// A point `(tau, theta, x, y)` of the symplectisation chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChartPoint {
    pub tau: f64,
    pub theta: f64,
    pub x: f64,
    pub y: f64,
}

impl ChartPoint {
    pub const fn new(tau: f64, theta: f64, x: f64, y: f64) -> Self {
        Self { tau, theta, x, y }
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.tau, self.theta, self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.tau.is_finite() && self.theta.is_finite() && self.x.is_finite() && self.y.is_finite()
    }
}

impl From<Vector4<f64>> for ChartPoint {
    fn from(v: Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<ChartPoint> for Vector4<f64> {
    fn from(p: ChartPoint) -> Self {
        p.to_vector()
    }
}

/// `(tau, theta, x - q(theta) y, y)`.
pub fn flatten_point(p: ChartPoint, profile: &SurfaceProfile) -> Result<ChartPoint> {
    let q = profile.q(p.theta)?;
    Ok(ChartPoint {
        x: p.x - q * p.y,
        ..p
    })
}

/// `(tau, theta, x + q(theta) y, y)`.
pub fn unflatten_point(p: ChartPoint, profile: &SurfaceProfile) -> Result<ChartPoint> {
    let q = profile.q(p.theta)?;
    Ok(ChartPoint {
        x: p.x + q * p.y,
        ..p
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pinned(a0: f64, b1: f64) -> SurfaceProfile {
        // b(theta) = b1 * sin(2 pi theta) / (2 pi), so b(0) = 0 and b'(0) = b1
        SurfaceProfile::new(Constant(a0), TrigPoly::new(0.0, vec![0.0], vec![b1 / TAU]))
    }

    #[test]
    fn classification_examples() {
        let info = classify_singularity(&pinned(-1.0, 0.5), 0.0).unwrap();
        assert_eq!((info.sign, info.kind), (Sign::Positive, Kind::Elliptic));
        assert_relative_eq!(info.c, -0.5);

        let info = classify_singularity(&pinned(1.0, 1.0), 0.0).unwrap();
        assert_eq!((info.sign, info.kind), (Sign::Negative, Kind::Hyperbolic));

        assert!(matches!(
            classify_singularity(&pinned(1.0, 0.0), 0.0),
            Err(Error::Degenerate { .. })
        ));
        assert!(matches!(
            classify_singularity(&pinned(1.0, -1.0), 0.0),
            Err(Error::Degenerate { .. })
        ));
        assert!(matches!(
            classify_singularity(&pinned(1.0, 1.0), 0.1),
            Err(Error::NotASingularPoint { .. })
        ));
    }

    #[test]
    fn linearization_examples() {
        let m = linearization_matrix(0.0, -0.5);
        assert_eq!(m, Matrix2::new(0.5, 0.0, 0.0, 0.5));
        assert_relative_eq!(m.determinant(), 0.25);
        assert_eq!(
            linearization_matrix(0.0, 1.0),
            Matrix2::new(-1.0, 0.0, 0.0, 2.0)
        );
        assert_eq!(
            linearization_matrix(3.0, 0.0),
            Matrix2::new(0.0, -3.0, 0.0, 1.0)
        );
    }

    #[test]
    fn linearization_agrees_with_classification() {
        for c in [-0.9, -0.5, -0.1, 0.3, 2.0, -3.0] {
            let m = linearization_matrix(0.7, c);
            let det = m.determinant();
            assert_relative_eq!(det, -c * (1.0 + c), epsilon = 1e-14);
            let info = classify_singularity(&pinned(1.0, c), 0.0).unwrap();
            assert_eq!(det > 0.0, info.kind == Kind::Elliptic);
        }
    }

    #[test]
    fn winding_examples() {
        assert_eq!(tb_degree(&SurfaceProfile::circle(), 64).unwrap(), 1);
        let reversed = SurfaceProfile::new(
            TrigPoly::new(0.0, vec![1.0], vec![0.0]),
            TrigPoly::new(0.0, vec![0.0], vec![-1.0]),
        );
        assert_eq!(tb_degree(&reversed, 64).unwrap(), -1);
        assert_eq!(
            tb_degree(&SurfaceProfile::new(Constant(2.0), Constant(1.0)), 16).unwrap(),
            0
        );
        let origin = SurfaceProfile::new(TrigPoly::new(0.0, vec![1.0], vec![0.0]), Constant(0.0));
        assert!(matches!(
            tb_degree(&origin, 64),
            Err(Error::LoopThroughOrigin { .. })
        ));
    }

    #[test]
    fn coarse_sampling_is_refined() {
        // winding three times, sampled far below the Nyquist rate
        let p = SurfaceProfile::new(
            TrigPoly::new(0.0, vec![0.0, 0.0, 1.0], vec![0.0; 3]),
            TrigPoly::new(0.0, vec![0.0; 3], vec![0.0, 0.0, 1.0]),
        );
        assert_eq!(tb_degree(&p, 4).unwrap(), 3);
    }

    #[test]
    fn winding_residual_stays_at_round_off() {
        for n in [16, 32, 64, 128] {
            let w = winding_number(&SurfaceProfile::circle(), n, ZERO_TOL).unwrap();
            assert!(w.residual < 1e-12, "n = {n}: {}", w.residual);
        }
    }

    #[test]
    fn signed_count_examples() {
        let circle = SurfaceProfile::circle();
        assert_eq!(tb_signed_count(&circle, Sign::Positive).unwrap(), 1);
        assert_eq!(tb_signed_count(&circle, Sign::Negative).unwrap(), 1);
        let constant = SurfaceProfile::new(Constant(2.0), Constant(1.0));
        assert_eq!(tb_signed_count(&constant, Sign::Positive).unwrap(), 0);
        let reversed = SurfaceProfile::new(
            TrigPoly::new(0.0, vec![1.0], vec![0.0]),
            TrigPoly::new(0.0, vec![0.0], vec![-1.0]),
        );
        assert_eq!(tb_signed_count(&reversed, Sign::Positive).unwrap(), -1);
    }

    #[test]
    fn tangent_zero_is_rejected() {
        // a = 1 + cos(2 pi theta) touches zero at theta = 1/2
        let p = SurfaceProfile::new(TrigPoly::new(1.0, vec![1.0], vec![0.0]), Constant(1.0));
        assert!(matches!(
            tb_signed_count(&p, Sign::Positive),
            Err(Error::TangentZero { .. })
        ));
    }

    #[test]
    fn elliptic_profile_examples() {
        let p = elliptic_normal_profile(0.0, Arc::new(Constant(-1.0)), 0.1).unwrap();
        for t in [-0.1, -0.05, 0.0, 0.03, 0.1] {
            assert_relative_eq!(p.b(t), t / 2.0, epsilon = 1e-15);
        }
        let info = classify_singularity(&p, 0.0).unwrap();
        assert_eq!((info.sign, info.kind), (Sign::Positive, Kind::Elliptic));
        assert_relative_eq!(info.c, -0.5);
        let paired = classify_singularity(&p, 0.5).unwrap();
        assert_eq!(paired.kind, Kind::Hyperbolic);

        let p = elliptic_normal_profile(0.0, Arc::new(Constant(1.0)), 0.1).unwrap();
        assert_relative_eq!(p.b(0.05), -0.025, epsilon = 1e-15);
        assert_eq!(classify_singularity(&p, 0.0).unwrap().sign, Sign::Negative);

        let p = elliptic_normal_profile(0.3, Arc::new(Constant(2.0)), 0.0).unwrap();
        assert_eq!(p.b(0.3), 0.0);
        assert_relative_eq!(classify_singularity(&p, 0.3).unwrap().c, -0.5);
    }

    #[test]
    fn elliptic_profile_derivatives_match_differences() {
        let a = Arc::new(TrigPoly::new(-1.0, vec![0.2], vec![0.1]));
        let p = elliptic_normal_profile(0.1, a, 0.12).unwrap();
        let h = 1e-5;
        for k in 0..200 {
            let t = k as f64 / 200.0;
            let [_, b1, b2] = p.b.jet(t);
            let fd1 = (p.b(t + h) - p.b(t - h)) / (2.0 * h);
            let fd2 = (p.b(t + h) - 2.0 * p.b(t) + p.b(t - h)) / (h * h);
            assert!((b1 - fd1).abs() < 1e-7, "b' at {t}");
            assert!((b2 - fd2).abs() < 1e-3 * (1.0 + b2.abs()), "b'' at {t}");
        }
    }

    #[test]
    fn flatten_examples() {
        // q(0.3) = 2 for a = 2 b
        let p = SurfaceProfile::new(Constant(2.0), Constant(1.0));
        let f = flatten_point(ChartPoint::new(0.0, 0.3, 0.5, 0.2), &p).unwrap();
        assert_relative_eq!(f.x, 0.1, epsilon = 1e-15);
        let u = unflatten_point(ChartPoint::new(0.0, 0.3, 0.1, 0.2), &p).unwrap();
        assert_relative_eq!(u.x, 0.5, epsilon = 1e-15);
        let on_axis = ChartPoint::new(1.0, 0.3, 0.7, 0.0);
        assert_eq!(flatten_point(on_axis, &p).unwrap(), on_axis);
        let sing = elliptic_normal_profile(0.0, Arc::new(Constant(-1.0)), 0.1).unwrap();
        let at_singular = ChartPoint::new(0.0, 0.0, 0.1, 0.1);
        assert!(matches!(
            flatten_point(at_singular, &sing),
            Err(Error::SingularAngle { .. })
        ));
    }

    #[test]
    fn sampled_profile_interpolates() {
        let n = 32;
        let theta: Vec<f64> = (0..n).map(|k| k as f64 / n as f64).collect();
        let a: Vec<f64> = theta
            .iter()
            .map(|t| (TAU * t).cos() + 0.3 * (2.0 * TAU * t).sin())
            .collect();
        let b: Vec<f64> = theta.iter().map(|t| (TAU * t).sin()).collect();
        let p = SurfaceProfile::from_samples(&theta, &a, &b).unwrap();
        for t in [0.013, 0.4, 0.77] {
            assert_relative_eq!(
                p.a(t),
                (TAU * t).cos() + 0.3 * (2.0 * TAU * t).sin(),
                epsilon = 1e-13
            );
            assert_relative_eq!(p.b.jet(t)[1], TAU * (TAU * t).cos(), epsilon = 1e-12);
        }
        assert!(SurfaceProfile::from_samples(&theta[..8], &a[..8], &b[..8]).is_err());
    }

    proptest! {
        #[test]
        fn flatten_round_trip(tau in -2.0..2.0f64, theta in 0.01..0.99f64, x in -1.0..1.0f64, y in -1.0..1.0f64) {
            let p = SurfaceProfile::new(TrigPoly::new(0.3, vec![0.5], vec![0.2]), TrigPoly::new(2.0, vec![0.4], vec![-0.3]));
            let pt = ChartPoint::new(tau, theta, x, y);
            let back = unflatten_point(flatten_point(pt, &p).unwrap(), &p).unwrap();
            prop_assert!((back.x - x).abs() < 1e-14);
            prop_assert_eq!((back.tau, back.theta, back.y), (tau, theta, y));
        }

        #[test]
        fn surface_rays_flatten_to_axis(theta in 0.0..1.0f64, r in -0.5..0.5f64) {
            let p = SurfaceProfile::new(TrigPoly::new(0.3, vec![0.5], vec![0.2]), TrigPoly::new(2.0, vec![0.4], vec![-0.3]));
            let pt = ChartPoint::new(0.0, theta, r * p.a(theta), r * p.b(theta));
            prop_assert!(flatten_point(pt, &p).unwrap().x.abs() < 1e-15);
        }

        #[test]
        fn classification_is_scale_invariant(a0 in prop_oneof![-3.0..-0.1f64, 0.1..3.0f64], c in -3.0..3.0f64, mu in 0.01..100.0f64) {
            prop_assume!(c.abs() > 1e-3 && (c + 1.0).abs() > 1e-3);
            let p = pinned(a0, c * a0);
            let base = classify_singularity(&p, 0.0).unwrap();
            let scaled = classify_singularity(&p.scaled(mu), 0.0).unwrap();
            prop_assert_eq!(base.sign, scaled.sign);
            prop_assert_eq!(base.kind, scaled.kind);
            prop_assert!((base.c - scaled.c).abs() < 1e-12 * (1.0 + c.abs()));
        }
    }
}
