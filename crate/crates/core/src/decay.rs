//! Weighted inner products along a strip, the exponent `alpha(s)`, and
//! regression fits of the asymptotic decay.
//!
//! On each row `s` the inner product is
//! `(g1, g2)_s = int_0^1 <g1(t), Omega(v(s,t)) M(v(s,t)) g2(t)> dt`,
//! evaluated by the trapezoid rule on the grid's `t` nodes.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::contact_structures::StructureModel;
use crate::error::{Error, Result};
use crate::grid::FieldGrid;
use crate::linalg::{diff2, diff4, linear_fit, max_abs4, trapezoid_weights};
use crate::spectral::{analytic_eigenvector, EigenPath, EigenvectorFn};

/// The inner product `(.,.)_s` of one row of a solution.
#[derive(Debug, Clone)]
pub struct WeightedInner {
    pub s: f64,
    pub m: Vec<Matrix4<f64>>,
    pub omega: Vec<Matrix4<f64>>,
    /// Symmetrized `Omega M` at each node.
    pub metric: Vec<Matrix4<f64>>,
    pub weights: Vec<f64>,
    pub h_t: f64,
    /// `c0 |g| <= |g|_s <= c1 |g|` against the unweighted `L2` norm.
    pub c0: f64,
    pub c1: f64,
}

impl WeightedInner {
    pub fn new(s: f64, row: &[Vector4<f64>], h_t: f64, model: &dyn StructureModel) -> Result<Self> {
        if row.len() < 3 {
            return Err(Error::GridTooShort(format!("{} nodes in t", row.len())));
        }
        let m: Vec<_> = row.iter().map(|v| model.m(v)).collect();
        let omega: Vec<_> = row.iter().map(|v| model.omega(v)).collect();
        let metric: Vec<_> = row.iter().map(|v| model.metric(v)).collect();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for g in &metric {
            let ev = SymmetricEigen::new(*g).eigenvalues;
            lo = lo.min(ev.min());
            hi = hi.max(ev.max());
        }
        if lo <= 0.0 {
            return Err(Error::PositivityFailure {
                point: row[0].into(),
                min_eigenvalue: lo,
            });
        }
        Ok(Self {
            s,
            m,
            omega,
            metric,
            weights: trapezoid_weights(row.len(), h_t),
            h_t,
            c0: lo.sqrt(),
            c1: hi.sqrt(),
        })
    }

    /// Row `i` of a grid.
    pub fn from_grid(grid: &FieldGrid, i: usize, model: &dyn StructureModel) -> Result<Self> {
        Self::new(grid.s(i), grid.row(i), grid.h_t(), model)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn norm2(&self, g: &[Vector4<f64>]) -> Result<f64> {
        inner_s(self, g, g)
    }
}

fn check_len(w: &WeightedInner, g: &[Vector4<f64>]) -> Result<()> {
    if g.len() != w.len() {
        return Err(Error::GridMismatch(format!(
            "path has {} nodes, row has {}",
            g.len(),
            w.len()
        )));
    }
    Ok(())
}

pub fn inner_s(w: &WeightedInner, g1: &[Vector4<f64>], g2: &[Vector4<f64>]) -> Result<f64> {
    check_len(w, g1)?;
    check_len(w, g2)?;
    Ok((0..w.len())
        .map(|j| w.weights[j] * g1[j].dot(&(w.metric[j] * g2[j])))
        .sum())
}

/// `Theta(s) g = M Omega^{-1} d_t Omega g`, with `d_t Omega` by fourth-order differences
/// (second order on rows shorter than five nodes).
pub fn theta_operator(w: &WeightedInner, g: &[Vector4<f64>]) -> Result<Vec<Vector4<f64>>> {
    check_len(w, g)?;
    let d_omega = if w.len() >= 5 {
        diff4(&w.omega, w.h_t)
    } else {
        diff2(&w.omega, w.h_t)
    };
    (0..w.len())
        .map(|j| {
            let inv = w.omega[j].try_inverse().ok_or(Error::SingularOmega { j })?;
            Ok(w.m[j] * inv * d_omega[j] * g[j])
        })
        .collect()
}

/// Largest entry of `Theta(s)` over the row.
pub fn theta_norm(w: &WeightedInner) -> Result<f64> {
    let d_omega = if w.len() >= 5 {
        diff4(&w.omega, w.h_t)
    } else {
        diff2(&w.omega, w.h_t)
    };
    let mut out: f64 = 0.0;
    for j in 0..w.len() {
        let inv = w.omega[j].try_inverse().ok_or(Error::SingularOmega { j })?;
        out = out.max(max_abs4(&(w.m[j] * inv * d_omega[j])));
    }
    Ok(out)
}

/// Splits `g` into its `(.,.)_s`-orthogonal projection onto `e` and the complement.
pub fn project_kernel(
    w: &WeightedInner,
    g: &[Vector4<f64>],
    e: &[Vector4<f64>],
) -> Result<(Vec<Vector4<f64>>, Vec<Vector4<f64>>)> {
    let ee = inner_s(w, e, e)?;
    if !(ee > 0.0) {
        return Err(Error::ZeroNorm { s: w.s });
    }
    let c = inner_s(w, g, e)? / ee;
    let p: Vec<_> = e.iter().map(|v| v * c).collect();
    let q = g.iter().zip(&p).map(|(a, b)| a - b).collect();
    Ok((p, q))
}

/// Samples an eigenvector (or any path) on the `t` nodes of a grid.
pub fn sample_path(e: &dyn EigenPath, grid: &FieldGrid) -> Vec<Vector4<f64>> {
    (0..grid.n_t).map(|j| e.value(grid.t(j))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayConfig {
    /// Start of the asymptotic regime; samples before it are never fitted.
    pub burn_in: Option<f64>,
    /// Values below this are treated as zero by the rate fits.
    pub floor: f64,
    /// Allowed gap between the two `alpha` columns.
    pub alpha_tolerance: f64,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self {
            burn_in: None,
            floor: 1e-10,
            alpha_tolerance: 1e-4,
        }
    }
}

impl DecayConfig {
    /// Indices of the last half of `s`, minus anything before the burn-in.
    fn window(&self, s: &[f64]) -> Vec<usize> {
        let mid = 0.5 * (s[0] + s[s.len() - 1]);
        let start = self.burn_in.map_or(mid, |b| b.max(mid));
        (0..s.len()).filter(|&i| s[i] >= start - 1e-12).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaTrace {
    pub s: Vec<f64>,
    pub norm2: Vec<f64>,
    /// `(d/ds |v|_s^2) / (2 |v|_s^2)`.
    pub alpha_logderiv: Vec<f64>,
    /// The same exponent from the structure: `[(v, G_s v)/2 + <v, Omega v_t>] / |v|_s^2`.
    pub alpha_formula: Vec<f64>,
    pub discrepancy_max: f64,
    pub tolerance: f64,
    /// Mean of `alpha` over the fit window.
    pub lambda_fit: f64,
    /// Fitted rate of `|alpha - lambda|`; `None` when that difference is below the floor.
    pub delta_fit: Option<f64>,
}

impl AlphaTrace {
    pub fn agree(&self) -> bool {
        self.discrepancy_max <= self.tolerance
    }

    /// Nearest point of `(pi/2) Z` to `lambda_fit`.
    pub fn lattice_lambda(&self) -> f64 {
        (self.lambda_fit / FRAC_PI_2).round() * FRAC_PI_2
    }
}

fn rows_inner(grid: &FieldGrid, model: &dyn StructureModel) -> Result<Vec<WeightedInner>> {
    (0..grid.n_s)
        .into_par_iter()
        .map(|i| WeightedInner::from_grid(grid, i, model))
        .collect()
}

pub fn alpha_trace(
    grid: &FieldGrid,
    model: &dyn StructureModel,
    cfg: &DecayConfig,
) -> Result<AlphaTrace> {
    if grid.n_s < 5 || grid.n_t < 5 {
        return Err(Error::GridTooShort(format!(
            "{}x{} grid, need 5x5",
            grid.n_s, grid.n_t
        )));
    }
    let rows = rows_inner(grid, model)?;
    alpha_from_rows(grid, &rows, cfg)
}

fn alpha_from_rows(
    grid: &FieldGrid,
    rows: &[WeightedInner],
    cfg: &DecayConfig,
) -> Result<AlphaTrace> {
    let s: Vec<f64> = (0..grid.n_s).map(|i| grid.s(i)).collect();
    let mut norm2 = Vec::with_capacity(grid.n_s);
    for (i, w) in rows.iter().enumerate() {
        let n = w.norm2(grid.row(i))?;
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::ZeroNorm { s: s[i] });
        }
        norm2.push(n);
    }
    let h_s = grid.h_s();
    let logn: Vec<f64> = norm2.iter().map(|n| n.ln()).collect();
    let alpha_logderiv: Vec<f64> = diff2(&logn, h_s).into_iter().map(|d| 0.5 * d).collect();

    let dt = grid.dt4();
    let mut alpha_formula = vec![0.0; grid.n_s];
    for j in 0..grid.n_t {
        let col: Vec<Matrix4<f64>> = rows.iter().map(|w| w.metric[j]).collect();
        let dg = diff2(&col, h_s);
        for i in 0..grid.n_s {
            let v = grid.at(i, j);
            let w = &rows[i];
            let term = 0.5 * v.dot(&(dg[i] * v)) + v.dot(&(w.omega[j] * dt[i * grid.n_t + j]));
            alpha_formula[i] += w.weights[j] * term;
        }
    }
    for (a, n) in alpha_formula.iter_mut().zip(&norm2) {
        *a /= n;
    }

    let discrepancy_max = alpha_logderiv
        .iter()
        .zip(&alpha_formula)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let win = cfg.window(&s);
    let lambda_fit = win.iter().map(|&i| alpha_logderiv[i]).sum::<f64>() / win.len() as f64;
    let lattice = (lambda_fit / FRAC_PI_2).round() * FRAC_PI_2;
    let gaps: Vec<f64> = alpha_logderiv.iter().map(|a| (a - lattice).abs()).collect();
    let delta_fit = match fit_rate(&s, &gaps, &win, cfg.floor) {
        Rate::Fitted(r) => Some(r),
        Rate::BelowFloor => None,
    };
    Ok(AlphaTrace {
        s,
        norm2,
        alpha_logderiv,
        alpha_formula,
        discrepancy_max,
        tolerance: cfg.alpha_tolerance,
        lambda_fit,
        delta_fit,
    })
}

/// An exponential rate `y ~ exp(-rate s)`, or a series too small to fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rate {
    Fitted(f64),
    BelowFloor,
}

impl Rate {
    pub fn value(&self) -> Option<f64> {
        match self {
            Rate::Fitted(r) => Some(*r),
            Rate::BelowFloor => None,
        }
    }

    /// Positive, or too small to measure.
    pub fn is_decaying(&self) -> bool {
        match self {
            Rate::Fitted(r) => *r > 0.0,
            Rate::BelowFloor => true,
        }
    }
}

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Rate::Fitted(r) => ser.serialize_f64(*r),
            Rate::BelowFloor => ser.serialize_str("below_floor"),
        }
    }
}

/// Log-linear fit on the window, using only samples above `floor`.
pub fn fit_rate(s: &[f64], y: &[f64], window: &[usize], floor: f64) -> Rate {
    let (xs, ls): (Vec<f64>, Vec<f64>) = window
        .iter()
        .filter(|&&i| y[i] > floor && y[i].is_finite())
        .map(|&i| (s[i], y[i].ln()))
        .unzip();
    if xs.len() < 3 || xs.len() * 2 < window.len() {
        return Rate::BelowFloor;
    }
    Rate::Fitted(-linear_fit(&xs, &ls).0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityReport {
    pub s: Vec<f64>,
    /// `g(s) = |Q_s v(s)|_s^2 / 2`.
    pub g: Vec<f64>,
    /// `g''/g` at interior samples inside the window.
    pub min_ratio: Option<f64>,
    /// `sqrt(2 min g''/g)`, with the ratio read through the exact second
    /// difference of an exponential.
    pub delta_fit: Option<f64>,
    /// `max g(s) e^{delta (s - s1)/sqrt 2} / g(s1)` over the window; at most 1 when the envelope holds.
    pub envelope_max: Option<f64>,
    pub envelope_holds: bool,
    /// `v` lies in the kernel direction, so `g` vanishes.
    pub degenerate: bool,
}

/// Relative slack in the envelope comparison, for round-off in `g`.
pub const ENVELOPE_SLACK: f64 = 1e-6;

/// Second-difference convexity of `g` relative to the kernel direction `e`.
///
/// The window is every sample with `s >= s_start`.
pub fn convexity_check(
    grid: &FieldGrid,
    model: &dyn StructureModel,
    e: &dyn EigenPath,
    s_start: f64,
) -> Result<ConvexityReport> {
    if grid.n_s < 5 {
        return Err(Error::GridTooShort(format!("{} rows, need 5", grid.n_s)));
    }
    let rows = rows_inner(grid, model)?;
    let ep = sample_path(e, grid);
    let s: Vec<f64> = (0..grid.n_s).map(|i| grid.s(i)).collect();
    let mut g = Vec::with_capacity(grid.n_s);
    let mut scale: f64 = 0.0;
    for (i, w) in rows.iter().enumerate() {
        let (_, q) = project_kernel(w, grid.row(i), &ep)?;
        g.push(0.5 * w.norm2(&q)?);
        scale = scale.max(w.norm2(grid.row(i))?);
    }
    let s_first = s.iter().position(|&x| x >= s_start - 1e-12);
    let degenerate = g.iter().all(|&x| x <= 1e-20 * scale);
    let mut report = ConvexityReport {
        s,
        g,
        min_ratio: None,
        delta_fit: None,
        envelope_max: None,
        envelope_holds: false,
        degenerate,
    };
    let Some(i1) = s_first else {
        return Err(Error::GridTooShort(format!(
            "no samples beyond s = {s_start}"
        )));
    };
    if degenerate {
        return Ok(report);
    }
    let h = grid.h_s();
    let g = &report.g;
    let lo = i1.max(1);
    if lo + 1 >= grid.n_s {
        return Err(Error::GridTooShort("window has no interior samples".into()));
    }
    let min_ratio = (lo..grid.n_s - 1)
        .map(|i| (g[i + 1] - 2.0 * g[i] + g[i - 1]) / (h * h * g[i]))
        .fold(f64::INFINITY, f64::min);
    report.min_ratio = Some(min_ratio);
    if min_ratio > 0.0 {
        // the second difference of exp(-k s) is 4 sinh^2(k h / 2) / h^2 times itself
        let k = 2.0 / h * (0.5 * h * min_ratio.sqrt()).asinh();
        let delta = std::f64::consts::SQRT_2 * k;
        let env = (i1..grid.n_s)
            .map(|i| g[i] * (k * (report.s[i] - report.s[i1])).exp() / g[i1])
            .fold(0.0, f64::max);
        report.delta_fit = Some(delta);
        report.envelope_max = Some(env);
        report.envelope_holds = env <= 1.0 + ENVELOPE_SLACK;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    /// Lattice eigenvalue matched to `lambda_fit`.
    pub lambda: f64,
    pub lambda_fit: f64,
    /// Rate of `sup_t |v|`.
    pub rho: Rate,
    /// Rates of `sup_t` of `v_s, v_t, v_ss, v_st, v_tt`.
    pub rho_derivatives: [Rate; 5],
    /// Rate of `|alpha - lambda|`.
    pub delta_alpha: Rate,
    /// Rate of `sup_t |r|`.
    pub delta_remainder: Rate,
    pub kappa: f64,
    pub q0_used: f64,
    pub alpha_discrepancy_max: f64,
    /// `sup_t |r(s, t)|` per row.
    pub remainder_sup: Vec<f64>,
    pub all_rates_positive: bool,
}

/// Matches the decay of `grid` to the eigenvector `e` (its `kappa` is ignored).
///
/// `r(s,t) = v(s,t) exp(-int_{s0}^s alpha) - kappa e(t)`, with `kappa` fitted
/// by projection at the last row.
pub fn decay_fit(
    grid: &FieldGrid,
    model: &dyn StructureModel,
    e: &EigenvectorFn,
    cfg: &DecayConfig,
) -> Result<DecayReport> {
    let rows = rows_inner(grid, model)?;
    if grid.n_s < 5 || grid.n_t < 5 {
        return Err(Error::GridTooShort(format!(
            "{}x{} grid, need 5x5",
            grid.n_s, grid.n_t
        )));
    }
    let trace = alpha_from_rows(grid, &rows, cfg)?;
    let lambda = trace.lattice_lambda();
    if (trace.lambda_fit - lambda).abs() > 0.1 || (lambda - e.lambda).abs() > 1e-9 {
        return Err(Error::NoSpectrumMatch {
            lambda: trace.lambda_fit,
        });
    }
    let unit = analytic_eigenvector(lambda, e.q0, 1.0)?;
    let ep = sample_path(&unit, grid);

    let h = grid.h_s();
    let mut integral = vec![0.0; grid.n_s];
    for i in 1..grid.n_s {
        integral[i] =
            integral[i - 1] + 0.5 * h * (trace.alpha_logderiv[i] + trace.alpha_logderiv[i - 1]);
    }
    let scaled: Vec<Vec<Vector4<f64>>> = (0..grid.n_s)
        .map(|i| {
            grid.row(i)
                .iter()
                .map(|v| v * (-integral[i]).exp())
                .collect()
        })
        .collect();
    let last = grid.n_s - 1;
    let kappa = inner_s(&rows[last], &scaled[last], &ep)? / inner_s(&rows[last], &ep, &ep)?;
    let remainder_sup: Vec<f64> = scaled
        .iter()
        .map(|row| {
            row.iter()
                .zip(&ep)
                .fold(0.0f64, |m, (w, e)| m.max((w - e * kappa).amax()))
        })
        .collect();

    let s = &trace.s;
    let win = cfg.window(s);
    let fit = |y: &[f64]| fit_rate(s, y, &win, cfg.floor);
    let sup_rows = |vals: &[Vector4<f64>]| -> Vec<f64> {
        (0..grid.n_s)
            .map(|i| {
                vals[i * grid.n_t..(i + 1) * grid.n_t]
                    .iter()
                    .fold(0.0f64, |m, v| m.max(v.amax()))
            })
            .collect()
    };
    let ds = grid.ds();
    let dt = grid.dt4();
    let with = |vals: Vec<Vector4<f64>>| grid.with_values(vals);
    let dss = with(ds.clone())?.ds();
    let dst = with(ds.clone())?.dt4();
    let dtt = with(dt.clone())?.dt4();
    let rho = fit(&sup_rows(&grid.values));
    let rho_derivatives = [
        fit(&sup_rows(&ds)),
        fit(&sup_rows(&dt)),
        fit(&sup_rows(&dss)),
        fit(&sup_rows(&dst)),
        fit(&sup_rows(&dtt)),
    ];
    let alpha_gap: Vec<f64> = trace
        .alpha_logderiv
        .iter()
        .map(|a| (a - lambda).abs())
        .collect();
    let delta_alpha = fit(&alpha_gap);
    let delta_remainder = fit(&remainder_sup);
    let all_rates_positive = std::iter::once(&rho)
        .chain(rho_derivatives.iter())
        .chain([&delta_alpha, &delta_remainder])
        .all(Rate::is_decaying);
    Ok(DecayReport {
        lambda,
        lambda_fit: trace.lambda_fit,
        rho,
        rho_derivatives,
        delta_alpha,
        delta_remainder,
        kappa,
        q0_used: e.q0,
        alpha_discrepancy_max: trace.discrepancy_max,
        remainder_sup,
        all_rates_positive,
    })
}

/// `min_k |v(s) - k e|_s / |v(s)|_s` at the row nearest `s`.
pub fn direction_error(
    grid: &FieldGrid,
    model: &dyn StructureModel,
    e: &dyn EigenPath,
    s: f64,
) -> Result<f64> {
    if s < grid.s_min || s > grid.s_max {
        return Err(Error::OutsideDomain { s, t: 0.0 });
    }
    let i = ((s - grid.s_min) / grid.h_s()).round() as usize;
    let w = WeightedInner::from_grid(grid, i, model)?;
    let ep = sample_path(e, grid);
    let (_, q) = project_kernel(&w, grid.row(i), &ep)?;
    let n = w.norm2(grid.row(i))?;
    if !(n > 0.0) {
        return Err(Error::ZeroNorm { s });
    }
    Ok((w.norm2(&q)? / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact_structures::{FrozenStructure, StructureField};
    use crate::exact_solutions::ExplicitFamily;
    use crate::geometry::ChartPoint;
    use crate::spectral::Parity;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn frozen(q0: f64) -> FrozenStructure {
        let f = StructureField::new(
            Arc::new(crate::contact_structures::ConstantQ(q0)),
            1.0 + 2.0 * q0 * q0,
        )
        .unwrap();
        FrozenStructure::at(&f, &ChartPoint::new(0.0, 0.0, 0.0, 0.0))
    }

    fn const_row(n: usize, v: Vector4<f64>) -> Vec<Vector4<f64>> {
        vec![v; n]
    }

    fn kernel() -> EigenvectorFn {
        EigenvectorFn {
            lambda: 0.0,
            kappa: 1.0,
            q0: 0.0,
            parity: Parity::Even,
        }
    }

    #[test]
    fn constant_kernel_path_has_unit_norm() {
        let model = frozen(-3.0);
        let row = const_row(17, Vector4::zeros());
        let w = WeightedInner::new(0.0, &row, 1.0 / 16.0, &model).unwrap();
        let e = const_row(17, Vector4::new(0.0, 1.0, 0.0, 0.0));
        assert!((w.norm2(&e).unwrap() - 1.0).abs() < 1e-14);
        assert!(w.c0 > 0.0 && w.c1 >= w.c0);
    }

    #[test]
    fn mismatched_paths_are_rejected() {
        let model = frozen(1.0);
        let w = WeightedInner::new(0.0, &const_row(9, Vector4::zeros()), 0.125, &model).unwrap();
        let short = const_row(8, Vector4::zeros());
        assert!(matches!(
            inner_s(&w, &short, &short),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn theta_vanishes_for_constant_coefficients() {
        let model = frozen(2.0);
        let w = WeightedInner::new(0.0, &const_row(11, Vector4::zeros()), 0.1, &model).unwrap();
        let g = const_row(11, Vector4::new(1.0, 2.0, 3.0, 4.0));
        assert!(theta_operator(&w, &g)
            .unwrap()
            .iter()
            .all(|v| v.amax() == 0.0));
        assert_eq!(theta_norm(&w).unwrap(), 0.0);
    }

    #[test]
    fn projection_fixes_its_range() {
        let model = frozen(-1.0);
        let w = WeightedInner::new(0.0, &const_row(9, Vector4::zeros()), 0.125, &model).unwrap();
        let e = sample_path(
            &kernel(),
            &FieldGrid::from_fn((0.0, 1.0), 3, 9, |_, _| Vector4::zeros()).unwrap(),
        );
        let (p, q) = project_kernel(&w, &e, &e).unwrap();
        assert!(p.iter().zip(&e).all(|(a, b)| (a - b).amax() < 1e-15));
        assert!(q.iter().all(|v| v.amax() < 1e-15));
        let zero = const_row(9, Vector4::zeros());
        assert!(matches!(
            project_kernel(&w, &e, &zero),
            Err(Error::ZeroNorm { .. })
        ));
    }

    fn pure_eigenfield(
        q0: f64,
        lambda: f64,
        s_range: (f64, f64),
        n_s: usize,
        n_t: usize,
    ) -> FieldGrid {
        let e = analytic_eigenvector(lambda, q0, 0.3).unwrap();
        FieldGrid::from_fn(s_range, n_s, n_t, |s, t| e.value(t) * (lambda * s).exp()).unwrap()
    }

    #[test]
    fn pure_eigenfield_has_constant_alpha() {
        let q0 = -10.0;
        let lambda = -FRAC_PI_2;
        let grid = pure_eigenfield(q0, lambda, (0.0, 4.0), 129, 65);
        let tr = alpha_trace(&grid, &frozen(q0), &DecayConfig::default()).unwrap();
        for (a, b) in tr.alpha_logderiv.iter().zip(&tr.alpha_formula) {
            assert!((a - lambda).abs() < 1e-10, "{a}");
            assert!((b - lambda).abs() < 1e-5, "{b}");
        }
        assert!(tr.delta_fit.is_none());
        assert_eq!(tr.lattice_lambda(), lambda);
    }

    #[test]
    fn pure_eigenfield_remainder_is_below_floor() {
        let q0 = -10.0;
        let lambda = -FRAC_PI_2;
        let grid = pure_eigenfield(q0, lambda, (0.0, 4.0), 129, 65);
        let e = analytic_eigenvector(lambda, q0, 1.0).unwrap();
        let rep = decay_fit(&grid, &frozen(q0), &e, &DecayConfig::default()).unwrap();
        assert_eq!(rep.delta_remainder, Rate::BelowFloor);
        assert_eq!(rep.delta_alpha, Rate::BelowFloor);
        assert!((rep.kappa - 0.3).abs() < 1e-12);
        assert!((rep.rho.value().unwrap() - FRAC_PI_2).abs() < 1e-9);
        assert!(rep.all_rates_positive);
        let json = serde_json::to_string(&rep.delta_alpha).unwrap();
        assert_eq!(json, "\"below_floor\"");
    }

    #[test]
    fn wrong_eigenvalue_is_not_matched() {
        let q0 = 2.0;
        let grid = pure_eigenfield(q0, -FRAC_PI_2, (0.0, 2.0), 33, 17);
        let e = analytic_eigenvector(-std::f64::consts::PI, q0, 1.0).unwrap();
        assert!(matches!(
            decay_fit(&grid, &frozen(q0), &e, &DecayConfig::default()),
            Err(Error::NoSpectrumMatch { .. })
        ));
    }

    #[test]
    fn zero_row_is_reported() {
        let grid = FieldGrid::from_fn((0.0, 1.0), 5, 5, |_, _| Vector4::zeros()).unwrap();
        assert!(matches!(
            alpha_trace(&grid, &frozen(0.0), &DecayConfig::default()),
            Err(Error::ZeroNorm { .. })
        ));
    }

    #[test]
    fn pure_exponential_convexity() {
        let q0 = -4.0;
        let lambda = -FRAC_PI_2;
        let grid = pure_eigenfield(q0, lambda, (0.0, 3.0), 193, 33);
        let rep = convexity_check(&grid, &frozen(q0), &kernel(), 0.0).unwrap();
        let ratio = rep.min_ratio.unwrap();
        // second difference of exp(2 lambda s)
        let h = grid.h_s();
        let discrete = (2.0 * (lambda * h).sinh() / h).powi(2);
        assert!((ratio - discrete).abs() < 1e-8, "{ratio}");
        assert!((ratio - 4.0 * lambda * lambda).abs() < 4.0 * lambda.powi(4) * h * h);
        assert!(rep.envelope_holds);
        assert!(!rep.degenerate);
    }

    #[test]
    fn kernel_field_is_degenerate() {
        let grid = FieldGrid::from_fn((0.0, 1.0), 9, 9, |s, _| {
            Vector4::new(0.0, 1.0 + s, 0.0, 0.0)
        })
        .unwrap();
        let rep = convexity_check(&grid, &frozen(1.0), &kernel(), 0.0).unwrap();
        assert!(rep.degenerate);
        assert!(rep.min_ratio.is_none());
        let short = FieldGrid::from_fn((0.0, 1.0), 4, 9, |_, _| Vector4::zeros()).unwrap();
        assert!(matches!(
            convexity_check(&short, &frozen(1.0), &kernel(), 0.0),
            Err(Error::GridTooShort(_))
        ));
    }

    #[test]
    fn theta_decays_with_the_strip() {
        let fam = ExplicitFamily::new(0.2).unwrap();
        let f = fam.structure_field();
        let grid = fam.sample_flattened((4.0, 8.0), 5, 33).unwrap();
        let ratios: Vec<f64> = (0..5)
            .map(|i| {
                let w = WeightedInner::from_grid(&grid, i, &f).unwrap();
                theta_norm(&w).unwrap() / w.norm2(grid.row(i)).unwrap().sqrt()
            })
            .collect();
        let spread = ratios.iter().cloned().fold(0.0, f64::max)
            / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 1.5, "{ratios:?}");
    }

    fn random_path(seed: &[f64], n: usize) -> Vec<Vector4<f64>> {
        (0..n)
            .map(|j| {
                let t = j as f64 / (n - 1) as f64;
                Vector4::new(
                    seed[0] + seed[1] * t,
                    seed[2] * (3.0 * t).sin(),
                    seed[3] + seed[4] * t * t,
                    seed[5] * (2.0 * t).cos(),
                )
            })
            .collect()
    }

    fn strip_row() -> WeightedInner {
        let fam = ExplicitFamily::new(0.2).unwrap();
        let grid = fam.sample_flattened((3.0, 3.5), 3, 33).unwrap();
        WeightedInner::from_grid(&grid, 0, &fam.structure_field()).unwrap()
    }

    proptest! {
        #[test]
        fn inner_product_axioms(a in proptest::collection::vec(-1.0..1.0f64, 6), b in proptest::collection::vec(-1.0..1.0f64, 6), x in -2.0..2.0f64, y in -2.0..2.0f64) {
            let w = strip_row();
            let (g1, g2) = (random_path(&a, 33), random_path(&b, 33));
            let g3 = random_path(&[0.3, -0.2, 0.5, 0.1, 0.7, -0.4], 33);
            let sym = inner_s(&w, &g1, &g2).unwrap() - inner_s(&w, &g2, &g1).unwrap();
            let scale = w.c1 * w.c1 * (1.0 + a.iter().chain(&b).fold(0.0f64, |m, v| m.max(v.abs()))).powi(2);
            prop_assert!(sym.abs() < 1e-12 * scale);
            let combo: Vec<_> = g1.iter().zip(&g2).map(|(u, v)| u * x + v * y).collect();
            let lhs = inner_s(&w, &combo, &g3).unwrap();
            let rhs = x * inner_s(&w, &g1, &g3).unwrap() + y * inner_s(&w, &g2, &g3).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-11 * scale);
            if a.iter().any(|v| v.abs() > 1e-3) {
                prop_assert!(w.norm2(&g1).unwrap() > 0.0);
            }
        }

        #[test]
        fn theta_is_antisymmetric(a in proptest::collection::vec(-1.0..1.0f64, 6), b in proptest::collection::vec(-1.0..1.0f64, 6)) {
            let w = strip_row();
            let (g1, g2) = (random_path(&a, 33), random_path(&b, 33));
            let (t1, t2) = (theta_operator(&w, &g1).unwrap(), theta_operator(&w, &g2).unwrap());
            let defect = inner_s(&w, &t1, &g2).unwrap() + inner_s(&w, &g1, &t2).unwrap();
            let scale = inner_s(&w, &t1, &t1).unwrap().sqrt() * w.norm2(&g2).unwrap().sqrt()
                + inner_s(&w, &t2, &t2).unwrap().sqrt() * w.norm2(&g1).unwrap().sqrt();
            prop_assert!(defect.abs() <= 1e-10 * scale.max(1e-300));
        }

        #[test]
        fn projections_are_complementary(a in proptest::collection::vec(-1.0..1.0f64, 6)) {
            let w = strip_row();
            let g = random_path(&a, 33);
            let e = vec![Vector4::new(0.0, 1.0, 0.0, 0.0); 33];
            let (p, q) = project_kernel(&w, &g, &e).unwrap();
            let n = w.norm2(&g).unwrap();
            prop_assert!((w.norm2(&p).unwrap() + w.norm2(&q).unwrap() - n).abs() <= 1e-12 * n.max(1e-300));
            prop_assert!(inner_s(&w, &q, &e).unwrap().abs() <= 1e-12 * n.sqrt().max(1e-300) * w.c1);
            let (pp, pq) = project_kernel(&w, &p, &e).unwrap();
            prop_assert!(pp.iter().zip(&p).all(|(x, y)| (x - y).amax() <= 1e-12 * (1.0 + y.amax())));
            prop_assert!(pq.iter().all(|x| x.amax() <= 1e-12 * n.sqrt().max(1.0)));
            for j in 0..33 {
                prop_assert!((p[j] + q[j] - g[j]).amax() <= 1e-15 * (1.0 + g[j].amax()));
            }
        }
    }
}
