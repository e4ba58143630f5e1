//! Closed-form finite-energy strips near an elliptic singular point, the
//! strip/half-disk biholomorphism, Cauchy-Riemann residuals and energies.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::sync::Arc;

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use serde::Serialize;

pub use crate::grid::FieldGrid;

use crate::contact_structures::{
    eval_j_simple, eval_jhat, j_simple_derivative, jhat_derivative, ReciprocalQ, StructureField,
};
use crate::error::{Error, Result};
use crate::geometry::{elliptic_normal_profile, ChartPoint, Constant, SurfaceProfile};
use crate::linalg::trapezoid_weights;

/// `tanh(pi (s + i t) / 4)`, mapping the strip `R x [0, 1]` onto the open upper half disk.
pub fn strip_to_halfdisk(s: f64, t: f64) -> Complex64 {
    let (a, b) = (FRAC_PI_4 * s, FRAC_PI_4 * t);
    // tanh(a + ib) = (sinh 2a + i sin 2b) / (cosh 2a + cos 2b), divided through by cosh 2a
    let ch = (2.0 * a).cosh();
    let den = 1.0 + (2.0 * b).cos() / ch;
    Complex64::new((2.0 * a).tanh() / den, (2.0 * b).sin() / ch / den)
}

/// `(eps^2 (s^2 + t^2 - 1) / 4, eps s, -eps t, eps^2 s t / 2)` on the closed upper half disk.
pub fn halfdisk_solution(eps: f64, s: f64, t: f64) -> Result<ChartPoint> {
    if s * s + t * t > 1.0 + 1e-12 || t < -1e-12 {
        return Err(Error::OutsideDomain { s, t });
    }
    let e2 = eps * eps;
    Ok(ChartPoint::new(
        0.25 * e2 * (s * s + t * t - 1.0),
        eps * s,
        -eps * t,
        0.5 * e2 * s * t,
    ))
}

/// The half-disk solution composed with [`strip_to_halfdisk`], in closed form.
pub fn strip_solution(eps: f64, s: f64, t: f64) -> ChartPoint {
    let (sn, cs) = (FRAC_PI_2 * t).sin_cos();
    let (sh, ch) = ((FRAC_PI_2 * s).sinh(), (FRAC_PI_2 * s).cosh());
    let d = cs + ch;
    let e2 = eps * eps;
    ChartPoint::new(
        -0.5 * e2 * cs / d,
        eps * sh / d,
        -eps * sn / d,
        0.5 * e2 * sn * sh / (d * d),
    )
}

/// Half-width of the window where the explicit profile is exact.
pub const PROFILE_WINDOW: f64 = 0.25;

/// One member of the explicit family, together with the data needed to
/// study it in either chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplicitFamily {
    pub eps: f64,
}

impl ExplicitFamily {
    /// `0 < |eps| <= 1/4`: the image reaches `|theta| = |eps|`, and the
    /// profile is exact only on `|theta| <= 1/4`.
    pub fn new(eps: f64) -> Result<Self> {
        if eps == 0.0 || !eps.is_finite() || eps.abs() > PROFILE_WINDOW {
            return Err(Error::InvalidParameter(format!(
                "epsilon must satisfy 0 < |epsilon| <= {PROFILE_WINDOW}, got {eps}"
            )));
        }
        Ok(Self { eps })
    }

    /// Elliptic profile at `theta = 0` with `b = theta / 2` (positive end) or
    /// `b = -theta / 2` (negative end) on `|theta| <= 1/4`.
    pub fn profile(&self) -> SurfaceProfile {
        let a = if self.eps > 0.0 { -1.0 } else { 1.0 };
        elliptic_normal_profile(0.0, Arc::new(Constant(a)), PROFILE_WINDOW)
            .expect("constant a is nonzero")
    }

    /// `(0, eps, 0, 0)`, the limit as `s -> +inf`.
    pub fn asymptotic_point(&self) -> Vector4<f64> {
        Vector4::new(0.0, self.eps, 0.0, 0.0)
    }

    /// `q = a / b = -2 / theta`, in coordinates centred at the asymptotic point.
    pub fn q_recentered(&self) -> ReciprocalQ {
        ReciprocalQ {
            scale: -2.0,
            shift: self.eps,
        }
    }

    /// Structure field on the recentred angle range `|theta'| <= |eps| / 10` with default `C`.
    pub fn structure_field(&self) -> StructureField {
        let r = 0.1 * self.eps.abs();
        StructureField::with_default_c(Arc::new(self.q_recentered()), -r, r)
            .expect("q is regular near the asymptotic point")
    }

    pub fn point(&self, s: f64, t: f64) -> Vector4<f64> {
        strip_solution(self.eps, s, t).to_vector()
    }

    /// Flattened `x' = x + 2 y / theta`, then `theta' = theta - eps`.
    pub fn flattened_point(&self, s: f64, t: f64) -> Result<Vector4<f64>> {
        let p = strip_solution(self.eps, s, t);
        if p.theta.abs() < 1e-300 {
            return Err(Error::Precondition(format!(
                "s = {s} maps onto the singular angle"
            )));
        }
        Ok(Vector4::new(
            p.tau,
            p.theta - self.eps,
            p.x + 2.0 * p.y / p.theta,
            p.y,
        ))
    }

    pub fn sample(&self, s_range: (f64, f64), n_s: usize, n_t: usize) -> Result<FieldGrid> {
        FieldGrid::from_fn(s_range, n_s, n_t, |s, t| self.point(s, t))
    }

    /// Sample in flattened, recentred coordinates; needs `s` bounded away from 0.
    pub fn sample_flattened(
        &self,
        s_range: (f64, f64),
        n_s: usize,
        n_t: usize,
    ) -> Result<FieldGrid> {
        if s_range.0 <= 0.0 {
            return Err(Error::Precondition("flattened samples need s > 0".into()));
        }
        FieldGrid::from_fn(s_range, n_s, n_t, |s, t| {
            self.flattened_point(s, t).expect("s > 0")
        })
    }
}

/// A chart in which the Cauchy-Riemann system `v_s + M(v) v_t = 0` is posed.
///
/// Both charts share the condition `x = y = 0` at `t = 0`; at `t = 1` they
/// require `tau = 0` and a chart-specific surface equation.
pub trait CrChart: Sync {
    fn structure(&self, v: &Vector4<f64>) -> Matrix4<f64>;
    fn structure_derivative(&self, v: &Vector4<f64>, dir: &Vector4<f64>) -> Matrix4<f64>;
    /// Surface equation at `t = 1` and its gradient.
    fn surface(&self, v: &Vector4<f64>) -> (f64, Vector4<f64>);
    fn bound(&self) -> f64;

    fn check_domain(&self, v: &Vector4<f64>) -> Result<()> {
        if !(v.iter().all(|c| c.is_finite())
            && v[2].abs() <= self.bound()
            && v[3].abs() <= self.bound())
        {
            return Err(Error::ChartExceeded {
                point: [v[0], v[1], v[2], v[3]],
            });
        }
        Ok(())
    }
}

/// The unflattened chart with `J~` and surface `b(theta) x - a(theta) y = 0`.
#[derive(Debug, Clone)]
pub struct SimpleChart {
    pub profile: SurfaceProfile,
    pub bound: f64,
}

impl CrChart for SimpleChart {
    fn structure(&self, v: &Vector4<f64>) -> Matrix4<f64> {
        eval_j_simple(&ChartPoint::from(*v))
    }

    fn structure_derivative(&self, _v: &Vector4<f64>, dir: &Vector4<f64>) -> Matrix4<f64> {
        j_simple_derivative(dir)
    }

    fn surface(&self, v: &Vector4<f64>) -> (f64, Vector4<f64>) {
        let [a, a1, _] = self.profile.a.jet(v[1]);
        let [b, b1, _] = self.profile.b.jet(v[1]);
        (
            b * v[2] - a * v[3],
            Vector4::new(0.0, b1 * v[2] - a1 * v[3], b, -a),
        )
    }

    fn bound(&self) -> f64 {
        self.bound
    }
}

/// The flattened chart with `J^` and surface `x = 0`.
#[derive(Debug, Clone)]
pub struct FlattenedChart {
    pub field: StructureField,
    pub bound: f64,
}

impl CrChart for FlattenedChart {
    fn structure(&self, v: &Vector4<f64>) -> Matrix4<f64> {
        eval_jhat(&ChartPoint::from(*v), &self.field)
    }

    fn structure_derivative(&self, v: &Vector4<f64>, dir: &Vector4<f64>) -> Matrix4<f64> {
        jhat_derivative(&ChartPoint::from(*v), &self.field, dir)
    }

    fn surface(&self, v: &Vector4<f64>) -> (f64, Vector4<f64>) {
        (v[2], Vector4::new(0.0, 0.0, 1.0, 0.0))
    }

    fn bound(&self) -> f64 {
        self.bound
    }

    fn check_domain(&self, v: &Vector4<f64>) -> Result<()> {
        let finite_q = self.field.q_jet(v[1]).iter().all(|c| c.is_finite());
        if !(finite_q
            && v.iter().all(|c| c.is_finite())
            && v[2].abs() <= self.bound
            && v[3].abs() <= self.bound)
        {
            return Err(Error::ChartExceeded {
                point: [v[0], v[1], v[2], v[3]],
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualReport {
    /// Largest component of `v_s + M(v) v_t` over all nodes.
    pub max_norm: f64,
    /// Trapezoid-weighted L2 norm of the residual.
    pub l2_norm: f64,
    /// `max |x|, |y|` on `t = t_min`.
    pub bc_t0: f64,
    /// `max |tau|` on `t = t_max`.
    pub bc_t1_tau: f64,
    /// Largest surface-equation defect on `t = t_max`.
    pub bc_t1_surface: f64,
}

impl ResidualReport {
    pub fn max_boundary_violation(&self) -> f64 {
        self.bc_t0.max(self.bc_t1_tau).max(self.bc_t1_surface)
    }
}

/// Residual of `v_s + M(v) v_t = 0` with second-order differences.
pub fn cr_residual(grid: &FieldGrid, chart: &dyn CrChart) -> Result<ResidualReport> {
    for v in &grid.values {
        chart.check_domain(v)?;
    }
    let (ds, dt) = (grid.ds(), grid.dt());
    let ws = trapezoid_weights(grid.n_s, grid.h_s());
    let wt = trapezoid_weights(grid.n_t, grid.h_t());
    let mut rep = ResidualReport {
        max_norm: 0.0,
        l2_norm: 0.0,
        bc_t0: 0.0,
        bc_t1_tau: 0.0,
        bc_t1_surface: 0.0,
    };
    let mut l2 = 0.0;
    for i in 0..grid.n_s {
        for j in 0..grid.n_t {
            let k = i * grid.n_t + j;
            let v = grid.values[k];
            let r = ds[k] + chart.structure(&v) * dt[k];
            rep.max_norm = rep.max_norm.max(r.amax());
            l2 += ws[i] * wt[j] * r.norm_squared();
        }
        let first = grid.at(i, 0);
        rep.bc_t0 = rep.bc_t0.max(first[2].abs()).max(first[3].abs());
        let last = grid.at(i, grid.n_t - 1);
        rep.bc_t1_tau = rep.bc_t1_tau.max(last[0].abs());
        rep.bc_t1_surface = rep.bc_t1_surface.max(chart.surface(&last).0.abs());
    }
    rep.l2_norm = l2.sqrt();
    Ok(rep)
}

/// Largest second derivative of the grid values, estimated by differences.
pub fn second_derivative_sup(grid: &FieldGrid) -> f64 {
    let (hs, ht) = (grid.h_s(), grid.h_t());
    let mut sup: f64 = 0.0;
    for i in 1..grid.n_s - 1 {
        for j in 1..grid.n_t - 1 {
            let c = grid.at(i, j);
            let vss = (grid.at(i + 1, j) - c * 2.0 + grid.at(i - 1, j)) / (hs * hs);
            let vtt = (grid.at(i, j + 1) - c * 2.0 + grid.at(i, j - 1)) / (ht * ht);
            let vst = (grid.at(i + 1, j + 1) - grid.at(i + 1, j - 1) - grid.at(i - 1, j + 1)
                + grid.at(i - 1, j - 1))
                / (4.0 * hs * ht);
            sup = sup.max(vss.amax()).max(vtt.amax()).max(vst.amax());
        }
    }
    sup
}

fn integrate(grid: &FieldGrid, integrand: impl Fn(usize) -> f64) -> f64 {
    let ws = trapezoid_weights(grid.n_s, grid.h_s());
    let wt = trapezoid_weights(grid.n_t, grid.h_t());
    let mut total = 0.0;
    for i in 0..grid.n_s {
        let mut row = 0.0;
        for j in 0..grid.n_t {
            row += wt[j] * integrand(i * grid.n_t + j);
        }
        total += ws[i] * row;
    }
    total
}

/// `int u^*(dx ^ dtheta)` in the unflattened chart, over the grid's parameter domain.
pub fn energy_dlambda(grid: &FieldGrid) -> f64 {
    let (ds, dt) = (grid.ds(), grid.dt());
    integrate(grid, |k| ds[k][2] * dt[k][1] - dt[k][2] * ds[k][1])
}

/// Monotone profile `phi: R -> [0, 1]` used in the energy supremum.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MonotoneProfile {
    Constant {
        value: f64,
    },
    Sigmoid {
        center: f64,
        width: f64,
    },
    /// Piecewise linear through `(tau, phi)` knots, constant outside.
    PiecewiseLinear {
        knots: Vec<(f64, f64)>,
    },
}

impl MonotoneProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::NonMonotoneProfile(m));
        match self {
            Self::Constant { value } if !(0.0..=1.0).contains(value) => {
                bad(format!("constant {value}"))
            }
            Self::Sigmoid { width, .. } if !(*width > 0.0) => bad(format!("sigmoid width {width}")),
            Self::PiecewiseLinear { knots } => {
                if knots.is_empty() {
                    return bad("no knots".into());
                }
                for w in knots.windows(2) {
                    if !(w[1].0 > w[0].0) || w[1].1 < w[0].1 {
                        return bad(format!("knots {:?} -> {:?}", w[0], w[1]));
                    }
                }
                if knots.iter().any(|k| !(0.0..=1.0).contains(&k.1)) {
                    return bad("knot value outside [0, 1]".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `(phi, phi')` at `tau`.
    pub fn eval(&self, tau: f64) -> (f64, f64) {
        match self {
            Self::Constant { value } => (*value, 0.0),
            Self::Sigmoid { center, width } => {
                let z = (tau - center) / width;
                let e = (-z.abs()).exp();
                let phi = if z >= 0.0 {
                    1.0 / (1.0 + e)
                } else {
                    e / (1.0 + e)
                };
                (phi, phi * (1.0 - phi) / width)
            }
            Self::PiecewiseLinear { knots } => {
                let first = knots[0];
                let last = knots[knots.len() - 1];
                if tau <= first.0 {
                    return (first.1, 0.0);
                }
                if tau >= last.0 {
                    return (last.1, 0.0);
                }
                let k = knots.partition_point(|p| p.0 <= tau);
                let (a, b) = (knots[k - 1], knots[k]);
                let slope = (b.1 - a.1) / (b.0 - a.0);
                (a.1 + slope * (tau - a.0), slope)
            }
        }
    }
}

/// Shifted sigmoids with centres evenly spread over `[tau_lo, tau_hi]`.
pub fn sigmoid_dictionary(
    tau_lo: f64,
    tau_hi: f64,
    n_centers: usize,
    width: f64,
) -> Vec<MonotoneProfile> {
    (0..n_centers)
        .map(|k| {
            let c = if n_centers == 1 {
                0.5 * (tau_lo + tau_hi)
            } else {
                tau_lo + (tau_hi - tau_lo) * k as f64 / (n_centers - 1) as f64
            };
            MonotoneProfile::Sigmoid { center: c, width }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyBudget {
    pub dlambda_energy: f64,
    /// Largest value over the dictionary; a lower bound for the supremum.
    pub hofer_energy_lb: f64,
    pub per_profile: Vec<f64>,
}

/// `int u^* d(phi(tau) lambda)` for each dictionary member, with `lambda = dy + x dtheta`.
pub fn energy_hofer(grid: &FieldGrid, dictionary: &[MonotoneProfile]) -> Result<EnergyBudget> {
    for phi in dictionary {
        phi.validate()?;
    }
    let (ds, dt) = (grid.ds(), grid.dt());
    let dlambda = |k: usize| ds[k][2] * dt[k][1] - dt[k][2] * ds[k][1];
    let per_profile: Vec<f64> = dictionary
        .iter()
        .map(|phi| {
            integrate(grid, |k| {
                let v = grid.values[k];
                let (p, dp) = phi.eval(v[0]);
                let lam_s = ds[k][3] + v[2] * ds[k][1];
                let lam_t = dt[k][3] + v[2] * dt[k][1];
                dp * (ds[k][0] * lam_t - dt[k][0] * lam_s) + p * dlambda(k)
            })
        })
        .collect();
    let hofer_energy_lb = per_profile
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(EnergyBudget {
        dlambda_energy: energy_dlambda(grid),
        hofer_energy_lb,
        per_profile,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationReport {
    /// `(eps_1, eps_2, min distance between sampled images)` for every pair.
    pub pairs: Vec<(f64, f64, f64)>,
    pub min_distance: f64,
    /// `(eps, sup norm)` sorted by `|eps|`.
    pub sup_norms: Vec<(f64, f64)>,
    /// Largest `sup norm / |eps|`.
    pub max_ratio: f64,
    pub separated: bool,
    pub converges: bool,
}

/// Checks that members of the family have disjoint images and shrink to the
/// singular point as `eps -> 0`.
pub fn family_separation_check(
    eps_list: &[f64],
    s_range: (f64, f64),
    n_s: usize,
    n_t: usize,
) -> Result<SeparationReport> {
    if eps_list.iter().any(|e| *e == 0.0 || !e.is_finite()) {
        return Err(Error::Precondition(
            "epsilon values must be finite and nonzero".into(),
        ));
    }
    if !(eps_list.iter().all(|e| *e > 0.0) || eps_list.iter().all(|e| *e < 0.0)) {
        return Err(Error::Precondition(
            "epsilon values must share a sign".into(),
        ));
    }
    let mut sorted = eps_list.to_vec();
    sorted.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Precondition(
            "epsilon values must be distinct".into(),
        ));
    }
    let clouds: Vec<FieldGrid> = sorted
        .iter()
        .map(|&e| ExplicitFamily::new(e)?.sample(s_range, n_s, n_t))
        .collect::<Result<_>>()?;

    let mut pairs = Vec::new();
    for a in 0..clouds.len() {
        for b in a + 1..clouds.len() {
            let mut best = f64::INFINITY;
            for p in &clouds[a].values {
                for q in &clouds[b].values {
                    best = best.min((p - q).norm());
                }
            }
            pairs.push((sorted[a], sorted[b], best));
        }
    }
    let min_distance = pairs.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
    let sup_norms: Vec<(f64, f64)> = sorted
        .iter()
        .zip(&clouds)
        .map(|(&e, g)| (e, g.sup_norm()))
        .collect();
    let max_ratio = sup_norms
        .iter()
        .map(|(e, s)| s / e.abs())
        .fold(0.0, f64::max);
    let increasing = sup_norms.windows(2).all(|w| w[1].1 > w[0].1);
    let bounded = sup_norms
        .iter()
        .all(|(e, s)| *s <= e.abs() * (1.0 + e.abs()));
    Ok(SeparationReport {
        separated: min_distance > 0.0,
        converges: increasing && bounded,
        pairs,
        min_distance,
        sup_norms,
        max_ratio,
    })
}

/// Closed-form `int u^*(dx ^ dtheta)` for the half-disk solution.
pub fn halfdisk_energy(eps: f64) -> f64 {
    0.5 * PI * eps * eps
}

/// The half-disk solution on the polar grid `(r, t) -> r e^{i pi t}`.
pub fn halfdisk_polar_grid(eps: f64, n_r: usize, n_t: usize) -> Result<FieldGrid> {
    FieldGrid::from_fn((0.0, 1.0), n_r, n_t, |r, t| {
        let (sn, cs) = (PI * t).sin_cos();
        halfdisk_solution(eps, r * cs, r * sn)
            .expect("polar grid stays in the half disk")
            .to_vector()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn biholomorphism_examples() {
        assert_eq!(strip_to_halfdisk(0.0, 0.0), Complex64::new(0.0, 0.0));
        let z = strip_to_halfdisk(0.0, 1.0);
        assert!((z - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert!((strip_to_halfdisk(20.0, 0.0) - 1.0).norm() < 1e-13);
        for s in [-3.0, -0.5, 0.7, 2.0] {
            assert_relative_eq!(strip_to_halfdisk(s, 1.0).norm(), 1.0, epsilon = 1e-15);
            assert!(strip_to_halfdisk(s, 0.0).im.abs() < 1e-16);
            let z = strip_to_halfdisk(s, 0.4);
            let direct = Complex64::new(FRAC_PI_4 * s, FRAC_PI_4 * 0.4).tanh();
            assert!((z - direct).norm() < 1e-15);
        }
    }

    #[test]
    fn halfdisk_examples() {
        assert_eq!(
            halfdisk_solution(1.0, 0.0, 1.0).unwrap(),
            ChartPoint::new(0.0, 0.0, -1.0, 0.0)
        );
        let p = halfdisk_solution(0.3, 0.5, 0.0).unwrap();
        assert_eq!((p.x, p.y), (0.0, 0.0));
        assert_relative_eq!(p.tau, 0.25 * 0.09 * (0.25 - 1.0));
        let phi: f64 = 1.1;
        let p = halfdisk_solution(0.3, phi.cos(), phi.sin()).unwrap();
        assert!(p.tau.abs() < 1e-15);
        assert!((p.y + 0.5 * p.x * p.theta).abs() < 1e-15);
        assert!(matches!(
            halfdisk_solution(0.3, 0.9, 0.9),
            Err(Error::OutsideDomain { .. })
        ));
        assert!(matches!(
            halfdisk_solution(0.3, 0.1, -0.1),
            Err(Error::OutsideDomain { .. })
        ));
    }

    #[test]
    fn strip_examples_and_composition() {
        let eps = 0.2;
        let p = strip_solution(eps, 0.0, 0.0);
        assert_relative_eq!(p.tau, -eps * eps / 4.0, epsilon = 1e-17);
        assert_eq!((p.theta, p.x, p.y), (0.0, 0.0, 0.0));
        let p = strip_solution(eps, 1.3, 0.0);
        assert_eq!((p.x, p.y), (0.0, 0.0));
        assert!(strip_solution(eps, 0.0, 1.0).tau.abs() < 1e-17);
        for s in [-4.0, -1.0, 0.0, 0.3, 2.5, 6.0] {
            for t in [0.0, 0.2, 0.5, 0.9, 1.0] {
                let z = strip_to_halfdisk(s, t);
                let composed = halfdisk_solution(eps, z.re, z.im).unwrap();
                let direct = strip_solution(eps, s, t);
                assert!(
                    (composed.to_vector() - direct.to_vector()).amax() < 1e-12,
                    "({s}, {t})"
                );
            }
        }
    }

    #[test]
    fn constant_grid_has_zero_residual() {
        let g =
            FieldGrid::from_fn((0.0, 1.0), 5, 5, |_, _| Vector4::new(0.3, 0.1, 0.0, 0.0)).unwrap();
        let chart = SimpleChart {
            profile: ExplicitFamily::new(0.2).unwrap().profile(),
            bound: 1.0,
        };
        assert_eq!(cr_residual(&g, &chart).unwrap().max_norm, 0.0);
    }

    #[test]
    fn boundary_violation_is_reported_separately() {
        let fam = ExplicitFamily::new(0.2).unwrap();
        let chart = SimpleChart {
            profile: fam.profile(),
            bound: 1.0,
        };
        let mut g = fam.sample((-2.0, 2.0), 41, 11).unwrap();
        for i in 0..g.n_s {
            g.values[i * g.n_t][2] += 0.05;
        }
        let rep = cr_residual(&g, &chart).unwrap();
        assert_relative_eq!(rep.bc_t0, 0.05, epsilon = 1e-15);
        assert!(rep.bc_t1_tau < 1e-15);
    }

    #[test]
    fn chart_bound_is_enforced() {
        let fam = ExplicitFamily::new(0.2).unwrap();
        let chart = SimpleChart {
            profile: fam.profile(),
            bound: 0.1,
        };
        let g = fam.sample((-2.0, 2.0), 11, 5).unwrap();
        assert!(matches!(
            cr_residual(&g, &chart),
            Err(Error::ChartExceeded { .. })
        ));
    }

    #[test]
    fn flattened_samples_meet_flat_boundary() {
        let fam = ExplicitFamily::new(0.2).unwrap();
        let g = fam.sample_flattened((3.0, 6.0), 31, 9).unwrap();
        for i in 0..g.n_s {
            assert!(g.at(i, g.n_t - 1)[2].abs() < 1e-15);
            assert_eq!(g.at(i, 0)[2], 0.0);
        }
        assert!(fam.sample_flattened((0.0, 1.0), 5, 5).is_err());
    }

    #[test]
    fn energy_of_trivial_maps() {
        let g =
            FieldGrid::from_fn((0.0, 1.0), 9, 9, |_, _| Vector4::new(1.0, 2.0, 3.0, 4.0)).unwrap();
        assert_eq!(energy_dlambda(&g), 0.0);
        let g = halfdisk_polar_grid(0.0, 9, 9).unwrap();
        assert_eq!(energy_dlambda(&g), 0.0);
    }

    #[test]
    fn hofer_dictionary_rules() {
        let g = halfdisk_polar_grid(0.2, 60, 60).unwrap();
        let e = energy_hofer(&g, &[MonotoneProfile::Constant { value: 1.0 }]).unwrap();
        assert_relative_eq!(e.hofer_energy_lb, e.dlambda_energy, epsilon = 1e-15);
        let e2 = energy_hofer(
            &g,
            &[
                MonotoneProfile::Constant { value: 1.0 },
                MonotoneProfile::Constant { value: 0.0 },
            ],
        )
        .unwrap();
        assert_eq!(e2.hofer_energy_lb, e.hofer_energy_lb);
        assert_eq!(e2.per_profile[1], 0.0);
        let bad = [MonotoneProfile::PiecewiseLinear {
            knots: vec![(0.0, 0.5), (1.0, 0.2)],
        }];
        assert!(matches!(
            energy_hofer(&g, &bad),
            Err(Error::NonMonotoneProfile(_))
        ));
        assert!(MonotoneProfile::Sigmoid {
            center: 0.0,
            width: 0.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn piecewise_profile_evaluates() {
        let phi = MonotoneProfile::PiecewiseLinear {
            knots: vec![(0.0, 0.0), (1.0, 0.5), (2.0, 1.0)],
        };
        assert_eq!(phi.eval(-1.0), (0.0, 0.0));
        assert_eq!(phi.eval(1.5), (0.75, 0.5));
        assert_eq!(phi.eval(3.0), (1.0, 0.0));
    }

    #[test]
    fn separation_preconditions() {
        assert!(family_separation_check(&[0.1, -0.1], (-2.0, 2.0), 9, 5).is_err());
        assert!(family_separation_check(&[0.1, 0.1], (-2.0, 2.0), 9, 5).is_err());
        let rep = family_separation_check(&[0.2, 0.1], (-3.0, 3.0), 31, 7).unwrap();
        assert!(rep.separated && rep.converges, "{rep:?}");
        assert!(rep.max_ratio <= 1.0);
    }
}
