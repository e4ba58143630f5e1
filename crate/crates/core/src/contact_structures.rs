//! The contact form, Reeb field, the explicit almost complex structures
//! `J~` (unflattened chart) and `J^` (flattened chart), and a compatible
//! nondegenerate 2-form `Omega` for `J^`.
//!
//! `Omega` is built from a Hermitian form. In the unflattened chart the
//! 1-forms `z1 = dtau + i lambda` and `z2 = dX + i dtheta` are complex
//! linear for `J~`, and
//!
//! ```text
//! omega = C dtau^lambda + dX^dtheta - q (dtau^dX + lambda^dtheta)
//! ```
//!
//! is the imaginary part of `z^* H z` with `H = [[C, -i q], [i q, 1]]`,
//! which is positive definite exactly when `C > q^2`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use serde::Serialize;

use crate::dual::{Dual, Scalar};
use crate::error::{Error, Result};
use crate::geometry::{ChartPoint, SurfaceProfile};
use crate::linalg::max_abs4;

/// `q(theta)` with its first two derivatives.
pub trait QFunction: Send + Sync + fmt::Debug {
    /// `[q, q', q'']`; non-finite where `q` is singular.
    fn jet(&self, theta: f64) -> [f64; 3];

    fn q(&self, theta: f64) -> f64 {
        self.jet(theta)[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantQ(pub f64);

impl QFunction for ConstantQ {
    fn jet(&self, _theta: f64) -> [f64; 3] {
        [self.0, 0.0, 0.0]
    }
}

/// `q = scale / (theta + shift)`, the ratio for a linear elliptic end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReciprocalQ {
    pub scale: f64,
    pub shift: f64,
}

impl QFunction for ReciprocalQ {
    fn jet(&self, theta: f64) -> [f64; 3] {
        let r = 1.0 / (theta + self.shift);
        [
            self.scale * r,
            -self.scale * r * r,
            2.0 * self.scale * r * r * r,
        ]
    }
}

impl QFunction for SurfaceProfile {
    fn jet(&self, theta: f64) -> [f64; 3] {
        self.q_jet(theta).unwrap_or([f64::NAN; 3])
    }
}

/// `q`, `q'` and the constant `C` entering `Omega`.
#[derive(Debug, Clone)]
pub struct StructureField {
    pub q: Arc<dyn QFunction>,
    pub c: f64,
}

impl StructureField {
    pub fn new(q: Arc<dyn QFunction>, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "C must be positive, got {c}"
            )));
        }
        Ok(Self { q, c })
    }

    /// `C = 1 + 2 sup q^2` over `[theta_lo, theta_hi]`.
    pub fn with_default_c(q: Arc<dyn QFunction>, theta_lo: f64, theta_hi: f64) -> Result<Self> {
        let sup = sup_q_squared(q.as_ref(), theta_lo, theta_hi)?;
        Self::new(q, 1.0 + 2.0 * sup)
    }

    pub fn q_jet(&self, theta: f64) -> [f64; 3] {
        self.q.jet(theta)
    }
}

pub fn sup_q_squared(q: &dyn QFunction, theta_lo: f64, theta_hi: f64) -> Result<f64> {
    let n = 1000;
    let mut sup: f64 = 0.0;
    for k in 0..=n {
        let theta = theta_lo + (theta_hi - theta_lo) * k as f64 / n as f64;
        let v = q.q(theta);
        if !v.is_finite() {
            return Err(Error::SingularAngle { theta });
        }
        sup = sup.max(v * v);
    }
    Ok(sup)
}

/// `lambda^ = dy + (x + q y) dtheta` as a covector in `(tau, theta, x, y)` order.
pub fn eval_lambda_hat(p: &ChartPoint, f: &StructureField) -> Vector4<f64> {
    let q = f.q.q(p.theta);
    Vector4::new(0.0, p.x + q * p.y, 0.0, 1.0)
}

/// `d/dy - q d/dx`.
pub fn eval_reeb(p: &ChartPoint, f: &StructureField) -> Vector4<f64> {
    Vector4::new(0.0, 0.0, -f.q.q(p.theta), 1.0)
}

/// Contact-plane frame `(e1^, e2^)` with `J^ e1^ = -e2^`, `J^ e2^ = e1^`.
pub fn contact_frame(p: &ChartPoint, f: &StructureField) -> (Vector4<f64>, Vector4<f64>) {
    let [q, qp, _] = f.q_jet(p.theta);
    let u = p.x + q * p.y;
    (
        Vector4::new(0.0, 1.0, q * u - qp * p.y, -u),
        Vector4::new(0.0, 0.0, 1.0, 0.0),
    )
}

/// Row-major entries of `J^` as a function of `x, y, q(theta), q'(theta)`.
pub fn jhat_entries<S: Scalar>(x: S, y: S, q: S, qp: S) -> [[S; 4]; 4] {
    let z = S::from(0.0);
    let one = S::from(1.0);
    let u = x + q * y;
    let yq = y * qp;
    let w = u * q - yq;
    [
        [z, -u, z, -one],
        [z, yq, one, q],
        [-q, -one + yq * w, w, q * w],
        [one, -u * yq, -u, -u * q],
    ]
}

fn to_matrix(e: [[f64; 4]; 4]) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| e[i][j])
}

/// The almost complex structure in the flattened chart.
pub fn eval_jhat(p: &ChartPoint, f: &StructureField) -> Matrix4<f64> {
    let [q, qp, _] = f.q_jet(p.theta);
    to_matrix(jhat_entries(p.x, p.y, q, qp))
}

/// Directional derivative of `J^` at `p` along `dir`.
pub fn jhat_derivative(p: &ChartPoint, f: &StructureField, dir: &Vector4<f64>) -> Matrix4<f64> {
    let [q, qp, qpp] = f.q_jet(p.theta);
    let e = jhat_entries(
        Dual::new(p.x, dir[2]),
        Dual::new(p.y, dir[3]),
        Dual::new(q, qp * dir[1]),
        Dual::new(qp, qpp * dir[1]),
    );
    Matrix4::from_fn(|i, j| e[i][j].eps)
}

/// Skew matrix of `C A^B + X^T - q (A^X + B^T)` in the frame `(A, B, X, T)`.
fn frame_form(c: f64, q: f64) -> Matrix4<f64> {
    Matrix4::new(
        0.0, c, -q, 0.0, //
        -c, 0.0, 0.0, -q, //
        q, 0.0, 0.0, 1.0, //
        0.0, q, -1.0, 0.0,
    )
}

/// Compatible 2-form for `J^` in the flattened chart.
pub fn eval_omega(p: &ChartPoint, f: &StructureField) -> Matrix4<f64> {
    let [q, qp, _] = f.q_jet(p.theta);
    let u = p.x + q * p.y;
    // rows: dtau, lambda^, dX = dx + q dy + q' y dtheta, dtheta
    let z = Matrix4::new(
        1.0,
        0.0,
        0.0,
        0.0, //
        0.0,
        u,
        0.0,
        1.0, //
        0.0,
        p.y * qp,
        1.0,
        q, //
        0.0,
        1.0,
        0.0,
        0.0,
    );
    z.transpose() * frame_form(f.c, q) * z
}

/// The same 2-form written in the unflattened chart, where `x` is the
/// unflattened coordinate. Entries: `O12 = C x`, `O13 = -q`, `O14 = C`,
/// `O23 = -1`, `O24 = q`, `O34 = 0`.
pub fn eval_omega_unflattened(p: &ChartPoint, q: f64, c: f64) -> Matrix4<f64> {
    let upper = [
        [0.0, c * p.x, -q, c],
        [0.0, 0.0, -1.0, q],
        [0.0, 0.0, 0.0, 0.0],
    ];
    Matrix4::from_fn(|i, j| match i.cmp(&j) {
        std::cmp::Ordering::Less => upper[i][j],
        std::cmp::Ordering::Greater => -upper[j][i],
        std::cmp::Ordering::Equal => 0.0,
    })
}

/// `J~` in the unflattened chart with `lambda = dy + x dtheta`.
pub fn eval_j_simple(p: &ChartPoint) -> Matrix4<f64> {
    let x = p.x;
    Matrix4::new(
        0.0, -x, 0.0, -1.0, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, -1.0, 0.0, 0.0, //
        1.0, 0.0, -x, 0.0,
    )
}

/// Directional derivative of `J~` along `dir`.
pub fn j_simple_derivative(dir: &Vector4<f64>) -> Matrix4<f64> {
    let dx = dir[2];
    let mut m = Matrix4::zeros();
    m[(0, 1)] = -dx;
    m[(3, 2)] = -dx;
    m
}

/// Anything that supplies a structure matrix `M(v)` and a compatible 2-form `Omega(v)`.
pub trait StructureModel: Sync {
    fn m(&self, v: &Vector4<f64>) -> Matrix4<f64>;
    fn omega(&self, v: &Vector4<f64>) -> Matrix4<f64>;

    /// `Omega M`, the metric of the weighted inner products.
    fn metric(&self, v: &Vector4<f64>) -> Matrix4<f64> {
        let g = self.omega(v) * self.m(v);
        (g + g.transpose()) * 0.5
    }
}

impl StructureModel for StructureField {
    fn m(&self, v: &Vector4<f64>) -> Matrix4<f64> {
        eval_jhat(&ChartPoint::from(*v), self)
    }

    fn omega(&self, v: &Vector4<f64>) -> Matrix4<f64> {
        eval_omega(&ChartPoint::from(*v), self)
    }
}

/// Constant coefficients, used for synthetic fields.
#[derive(Debug, Clone, Copy)]
pub struct FrozenStructure {
    pub m: Matrix4<f64>,
    pub omega: Matrix4<f64>,
}

impl FrozenStructure {
    pub fn at(f: &StructureField, p: &ChartPoint) -> Self {
        Self {
            m: eval_jhat(p, f),
            omega: eval_omega(p, f),
        }
    }
}

impl StructureModel for FrozenStructure {
    fn m(&self, _v: &Vector4<f64>) -> Matrix4<f64> {
        self.m
    }

    fn omega(&self, _v: &Vector4<f64>) -> Matrix4<f64> {
        self.omega
    }
}

/// Maximum violation of each compatibility identity over a sample set.
///
/// Each violation is the largest entry of the defect divided by the scale
/// of the matrices entering it, so the numbers are comparable across
/// points where `q` is large.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CompatibilityReport {
    pub samples: usize,
    pub j_square: f64,
    pub symmetry: f64,
    pub invariance: f64,
    pub lagrangian_l0: f64,
    pub lagrangian_l1: f64,
    pub min_eigenvalue: f64,
    /// Largest absolute entry of `|J^|^2 |Omega|` met, the scale of the invariance defect.
    pub max_scale: f64,
}

impl CompatibilityReport {
    pub fn max_violation(&self) -> f64 {
        self.j_square
            .max(self.symmetry)
            .max(self.invariance)
            .max(self.lagrangian_l0)
            .max(self.lagrangian_l1)
    }
}

/// Smallest eigenvalue accepted as positive.
pub const POSITIVITY_MARGIN: f64 = 1e-8;

pub fn compatibility_report(
    f: &StructureField,
    points: &[ChartPoint],
) -> Result<CompatibilityReport> {
    let mut rep = CompatibilityReport {
        min_eigenvalue: f64::INFINITY,
        ..Default::default()
    };
    let e = |k: usize| Vector4::from_fn(|i, _| if i == k { 1.0 } else { 0.0 });
    for p in points {
        let j = eval_jhat(p, f);
        let om = eval_omega(p, f);
        let (nj, no) = (max_abs4(&j), max_abs4(&om));
        let g = om * j;
        rep.j_square = rep
            .j_square
            .max(max_abs4(&(j * j + Matrix4::identity())) / (nj * nj));
        rep.symmetry = rep.symmetry.max(max_abs4(&(g - g.transpose())) / (no * nj));
        rep.invariance = rep
            .invariance
            .max(max_abs4(&(j.transpose() * om * j - om)) / (nj * nj * no));
        rep.max_scale = rep.max_scale.max(nj * nj * no);

        let lam = SymmetricEigen::new((g + g.transpose()) * 0.5)
            .eigenvalues
            .min();
        if !(lam > POSITIVITY_MARGIN) {
            return Err(Error::PositivityFailure {
                point: [p.tau, p.theta, p.x, p.y],
                min_eigenvalue: lam,
            });
        }
        rep.min_eigenvalue = rep.min_eigenvalue.min(lam);

        // tangent planes of R x L at (tau, theta, 0, 0) and of the surface at (0, theta, 0, y)
        let on_l0 = eval_omega(&ChartPoint::new(p.tau, p.theta, 0.0, 0.0), f);
        rep.lagrangian_l0 = rep
            .lagrangian_l0
            .max((e(0).dot(&(on_l0 * e(1)))).abs() / no);
        let on_l1 = eval_omega(&ChartPoint::new(0.0, p.theta, 0.0, p.y), f);
        rep.lagrangian_l1 = rep
            .lagrangian_l1
            .max((e(1).dot(&(on_l1 * e(3)))).abs() / no);
        rep.samples += 1;
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn field(q0: f64) -> StructureField {
        StructureField::new(Arc::new(ConstantQ(q0)), 1.0 + 2.0 * q0 * q0).unwrap()
    }

    fn varying() -> StructureField {
        StructureField::with_default_c(
            Arc::new(ReciprocalQ {
                scale: -2.0,
                shift: 0.2,
            }),
            -0.05,
            0.05,
        )
        .unwrap()
    }

    #[test]
    fn lambda_and_reeb() {
        let f = varying();
        let p = ChartPoint::new(0.3, 0.01, 0.04, -0.02);
        let lam = eval_lambda_hat(&p, &f);
        assert_eq!(
            eval_lambda_hat(&ChartPoint::new(0.0, 0.0, 0.0, 0.0), &f),
            Vector4::new(0.0, 0.0, 0.0, 1.0)
        );
        assert_relative_eq!(lam.dot(&eval_reeb(&p, &f)), 1.0);
        let (e1, e2) = contact_frame(&p, &f);
        assert_relative_eq!(lam.dot(&e1), 0.0, epsilon = 1e-16);
        assert_eq!(lam.dot(&e2), 0.0);
        assert_eq!(
            eval_reeb(&p, &field(2.0)),
            Vector4::new(0.0, 0.0, -2.0, 1.0)
        );
    }

    #[test]
    fn jhat_at_origin() {
        let q0 = -3.0;
        let j = eval_jhat(&ChartPoint::new(0.0, 0.0, 0.0, 0.0), &field(q0));
        let expected = Matrix4::new(
            0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 1.0, q0, -q0, -1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0,
        );
        assert_eq!(j, expected);
    }

    #[test]
    fn jhat_rotates_contact_frame() {
        let f = varying();
        let p = ChartPoint::new(0.0, 0.02, 0.07, -0.05);
        let j = eval_jhat(&p, &f);
        let (e1, e2) = contact_frame(&p, &f);
        assert!((j * e1 + e2).amax() < 1e-13);
        assert!((j * e2 - e1).amax() < 1e-13);
        assert!((j * Vector4::x() - eval_reeb(&p, &f)).amax() < 1e-15);
    }

    #[test]
    fn omega_examples_at_origin() {
        let q0 = 1.7;
        let f = field(q0);
        let p = ChartPoint::new(0.0, 0.0, 0.0, 0.0);
        let om = eval_omega(&p, &f);
        let g = om * eval_jhat(&p, &f);
        assert_relative_eq!(g[(1, 1)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(g[(0, 0)], f.c, epsilon = 1e-14);
        assert_eq!(om + om.transpose(), Matrix4::zeros());
    }

    #[test]
    fn omega_pulls_back_from_unflattened_chart() {
        let f = varying();
        let p = ChartPoint::new(0.2, 0.03, 0.06, -0.04);
        let [q, qp, _] = f.q_jet(p.theta);
        // D phi for (x_unfl) -> (x_flat = x_unfl - q y)
        let dphi = Matrix4::new(
            1.0,
            0.0,
            0.0,
            0.0,
            0.0,
            1.0,
            0.0,
            0.0,
            0.0,
            -qp * p.y,
            1.0,
            -q,
            0.0,
            0.0,
            0.0,
            1.0,
        );
        let dphi_inv = dphi.try_inverse().unwrap();
        let unfl = ChartPoint {
            x: p.x + q * p.y,
            ..p
        };
        let om_u = eval_omega_unflattened(&unfl, q, f.c);
        let pulled = dphi_inv.transpose() * om_u * dphi_inv;
        assert!((pulled - eval_omega(&p, &f)).amax() < 1e-12);
        let jt = eval_j_simple(&unfl);
        assert!((dphi * jt * dphi_inv - eval_jhat(&p, &f)).amax() < 1e-12);
        assert!((jt.transpose() * om_u * jt - om_u).amax() < 1e-12);
    }

    #[test]
    fn j_simple_examples() {
        let j = eval_j_simple(&ChartPoint::new(0.0, 0.0, 0.0, 0.0));
        assert_eq!(j * Vector4::y(), Vector4::new(0.0, 0.0, -1.0, 0.0));
        let j = eval_j_simple(&ChartPoint::new(0.4, 0.1, -0.3, 0.2));
        assert!((j * j + Matrix4::identity()).amax() < 1e-15);
    }

    #[test]
    fn derivatives_match_differences() {
        let f = varying();
        let p = ChartPoint::new(0.1, 0.02, 0.05, -0.03);
        let dir = Vector4::new(0.3, -0.7, 0.2, 0.5);
        let h = 1e-6;
        let plus = ChartPoint::from(p.to_vector() + dir * h);
        let minus = ChartPoint::from(p.to_vector() - dir * h);
        let fd = (eval_jhat(&plus, &f) - eval_jhat(&minus, &f)) / (2.0 * h);
        assert!((fd - jhat_derivative(&p, &f, &dir)).amax() < 1e-6);
        let fd = (eval_j_simple(&plus) - eval_j_simple(&minus)) / (2.0 * h);
        assert!((fd - j_simple_derivative(&dir)).amax() < 1e-9);
    }

    #[test]
    fn constant_q_report_is_clean() {
        let f = field(-4.0);
        let pts: Vec<ChartPoint> = (0..50)
            .map(|k| ChartPoint::new(k as f64 * 0.1 - 2.5, 0.0, 0.0, 0.0))
            .collect();
        let rep = compatibility_report(&f, &pts).unwrap();
        assert!(rep.max_violation() < 1e-12, "{rep:?}");
        assert!(rep.min_eigenvalue > 0.0);
    }

    #[test]
    fn small_c_fails_positivity() {
        let f = StructureField::new(Arc::new(ConstantQ(2.0)), 3.0).unwrap();
        let pts = [ChartPoint::new(0.0, 0.0, 0.0, 0.0)];
        assert!(matches!(
            compatibility_report(&f, &pts),
            Err(Error::PositivityFailure { .. })
        ));
    }

    proptest! {
        #[test]
        fn identities_hold_in_chart(tau in -1.0..1.0f64, theta in -0.05..0.05f64, x in -0.1..0.1f64, y in -0.1..0.1f64) {
            let f = varying();
            let rep = compatibility_report(&f, &[ChartPoint::new(tau, theta, x, y)]).unwrap();
            prop_assert!(rep.max_violation() < 1e-14, "{:?}", rep);
        }
    }
}
