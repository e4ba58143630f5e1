//! The asymptotic operator `A = -M_inf d/dt` on paths with `gamma(0)` in
//! `L0 = span(e1, e2)` and `gamma(1)` in `L1 = span(e2, e4)`.
//!
//! Its spectrum is `(pi/2) Z`, all simple, for every `q0`.

use std::f64::consts::FRAC_PI_2;

use faer::linalg::solvers::Solve;
use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector4};
use num_complex::Complex64;
use serde::Serialize;

use crate::contact_structures::{eval_jhat, eval_omega, StructureField, StructureModel};
use crate::error::{Error, Result};
use crate::geometry::ChartPoint;
use crate::grid::FieldGrid;
use crate::linalg::expm4;

/// `J^` at the origin of the flattened chart.
pub fn build_minf(q0: f64) -> Matrix4<f64> {
    Matrix4::new(
        0.0, 0.0, 0.0, -1.0, //
        0.0, 0.0, 1.0, q0, //
        -q0, -1.0, 0.0, 0.0, //
        1.0, 0.0, 0.0, 0.0,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticOperator {
    pub q0: f64,
    pub m_inf: Matrix4<f64>,
}

impl AsymptoticOperator {
    pub fn new(q0: f64) -> Self {
        Self {
            q0,
            m_inf: build_minf(q0),
        }
    }

    /// `D(lambda)`: determinant of the `(tau, x)` components of
    /// `exp(lambda M) u` for `u` running over `e1, e2`.
    pub fn shooting_determinant(&self, lambda: f64) -> f64 {
        let e = expm4(&(self.m_inf * lambda));
        e[(0, 0)] * e[(2, 1)] - e[(0, 1)] * e[(2, 0)]
    }

    fn shooting_block(&self, lambda: f64) -> Matrix2<f64> {
        let e = expm4(&(self.m_inf * lambda));
        Matrix2::new(e[(0, 0)], e[(0, 1)], e[(2, 0)], e[(2, 1)])
    }

    /// Initial value `gamma(0)` of the eigenpath for an eigenvalue found by shooting.
    pub fn shooting_eigenvector(&self, lambda: f64) -> Vector4<f64> {
        let n = self.shooting_block(lambda);
        let (r0, r1) = (n.row(0).norm(), n.row(1).norm());
        let row = if r0 >= r1 { n.row(0) } else { n.row(1) };
        let v = if row.norm() == 0.0 {
            nalgebra::Vector2::new(0.0, 1.0)
        } else {
            nalgebra::Vector2::new(-row[1], row[0]).normalize()
        };
        let v = if v[1] < 0.0 || (v[1] == 0.0 && v[0] < 0.0) {
            -v
        } else {
            v
        };
        Vector4::new(v[0], v[1], 0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Shooting,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub method: Method,
    pub q0: f64,
    pub n: Option<usize>,
    pub range: [f64; 2],
    pub eigenvalues: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub gaps: Vec<[f64; 2]>,
    /// Largest distance from a reported eigenvalue to `(pi/2) Z`.
    pub lattice_deviation: f64,
    /// Largest imaginary part among the reported (near-real) eigenvalues.
    pub max_imag: f64,
    /// Complex eigenvalues dropped as discretization artifacts.
    pub excluded_complex: usize,
}

impl SpectrumReport {
    pub fn all_simple(&self) -> bool {
        self.multiplicities.iter().all(|&m| m == 1)
    }
}

fn lattice_deviation(values: &[f64]) -> f64 {
    values
        .iter()
        .map(|v| (v - (v / FRAC_PI_2).round() * FRAC_PI_2).abs())
        .fold(0.0, f64::max)
}

fn lattice_in(lo: f64, hi: f64) -> Vec<f64> {
    let k0 = (lo / FRAC_PI_2).ceil() as i64;
    let k1 = (hi / FRAC_PI_2).floor() as i64;
    (k0..=k1).map(|k| k as f64 * FRAC_PI_2).collect()
}

fn gaps_for(eigenvalues: &[f64], lo: f64, hi: f64) -> Result<Vec<[f64; 2]>> {
    let n0 = (lo / FRAC_PI_2).ceil() as i64;
    let n1 = (hi / FRAC_PI_2).floor() as i64 - 1;
    if n1 < n0 {
        return Ok(Vec::new());
    }
    Ok(spectral_gaps(&[eigenvalues.to_vec()], FRAC_PI_2, (n0, n1))?
        .into_iter()
        .map(|g| [g.midpoint - g.half_width, g.midpoint + g.half_width])
        .collect())
}

/// Default bracketing step for shooting.
pub const BRACKET_STEP: f64 = 0.05;

/// Exact spectrum from roots of the shooting determinant.
pub fn spectrum_shooting(op: &AsymptoticOperator, lo: f64, hi: f64) -> Result<SpectrumReport> {
    if !(hi > lo) {
        return Err(Error::Precondition(format!(
            "empty search range [{lo}, {hi}]"
        )));
    }
    let n = ((hi - lo) / BRACKET_STEP).ceil().max(1.0) as usize;
    let nodes: Vec<f64> = (0..=n)
        .map(|k| lo + (hi - lo) * k as f64 / n as f64)
        .collect();
    let vals: Vec<f64> = nodes.iter().map(|&l| op.shooting_determinant(l)).collect();
    let mut roots = Vec::new();
    for k in 0..n {
        if vals[k] == 0.0 {
            roots.push(nodes[k]);
            continue;
        }
        if vals[k + 1] == 0.0 {
            if k + 1 == n {
                roots.push(nodes[n]);
            }
            continue;
        }
        if vals[k] * vals[k + 1] < 0.0 {
            let (mut a, mut b, mut fa) = (nodes[k], nodes[k + 1], vals[k]);
            while b - a > 1e-13 {
                let m = 0.5 * (a + b);
                let fm = op.shooting_determinant(m);
                if fm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if (fm < 0.0) == (fa < 0.0) {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
    }
    for cand in lattice_in(lo, hi) {
        if !roots.iter().any(|r| (r - cand).abs() < 1e-8) {
            return Err(Error::RangeTooCoarse { lambda: cand });
        }
    }
    let h = 1e-6;
    let multiplicities = roots
        .iter()
        .map(|&r| {
            let slope =
                (op.shooting_determinant(r + h) - op.shooting_determinant(r - h)) / (2.0 * h);
            if slope.abs() > 1e-6 {
                1
            } else {
                2
            }
        })
        .collect();
    Ok(SpectrumReport {
        method: Method::Shooting,
        q0: op.q0,
        n: None,
        range: [lo, hi],
        lattice_deviation: lattice_deviation(&roots),
        gaps: gaps_for(&roots, lo, hi)?,
        eigenvalues: roots,
        multiplicities,
        max_imag: 0.0,
        excluded_complex: 0,
    })
}

/// Index of the retained component `c` of node `i` in the reduced unknown
/// vector: node 0 keeps `(tau, theta)`, the last node keeps `(theta, y)`.
fn reduced_index(n: usize, i: usize, c: usize) -> Option<usize> {
    if i == 0 {
        return match c {
            0 | 1 => Some(c),
            _ => None,
        };
    }
    if i == n - 1 {
        let base = 2 + 4 * (n - 2);
        return match c {
            1 => Some(base),
            3 => Some(base + 1),
            _ => None,
        };
    }
    Some(2 + 4 * (i - 1) + c)
}

/// Box-scheme pencil `(K, B)` on `n` nodes:
/// `-M (g[i+1] - g[i]) / h = lambda (g[i] + g[i+1]) / 2` on every cell.
pub fn box_pencil(op: &AsymptoticOperator, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let dim = 4 * n - 4;
    let h = 1.0 / (n - 1) as f64;
    let mut k = DMatrix::zeros(dim, dim);
    let mut b = DMatrix::zeros(dim, dim);
    for cell in 0..n - 1 {
        for r in 0..4 {
            let row = 4 * cell + r;
            for c in 0..4 {
                let m = op.m_inf[(r, c)];
                if let Some(col) = reduced_index(n, cell + 1, c) {
                    k[(row, col)] -= m / h;
                }
                if let Some(col) = reduced_index(n, cell, c) {
                    k[(row, col)] += m / h;
                }
            }
            for node in [cell, cell + 1] {
                if let Some(col) = reduced_index(n, node, r) {
                    b[(row, col)] += 0.5;
                }
            }
        }
    }
    (k, b)
}

/// Exact eigenvalues of the box scheme: `(2 / h) tan(k pi h / 4)`.
pub fn box_scheme_eigenvalue(k: i64, n: usize) -> f64 {
    let h = 1.0 / (n - 1) as f64;
    2.0 / h * (k as f64 * std::f64::consts::PI * h / 4.0).tan()
}

/// Predicted discretization error at `lambda` on `n` nodes.
pub fn fd_error_estimate(lambda: f64, n: usize) -> f64 {
    let h = 1.0 / (n - 1) as f64;
    lambda.abs().powi(3) * h * h / 12.0
}

/// Largest eigenspace of the pencil: two free components at `t = 0`.
const KRYLOV_BLOCK: usize = 2;

/// Below this size the dense eigensolver is cheaper than Krylov iterations.
const DENSE_LIMIT: usize = 240;

fn push_orthonormal(basis: &mut Vec<DVector<f64>>, mut w: DVector<f64>) -> bool {
    let norm0 = w.norm();
    for _ in 0..2 {
        for q in basis.iter() {
            let c = q.dot(&w);
            w.axpy(-c, q, 1.0);
        }
    }
    let norm = w.norm();
    if !(norm > 1e-10 * norm0) {
        return false;
    }
    basis.push(w / norm);
    true
}

fn to_complex(z: faer::c64) -> Complex64 {
    Complex64::new(z.re, z.im)
}

/// Eigenvalues of `(K - sigma B)^{-1} B`, complete for `|nu| >= cutoff`.
///
/// Small pencils go to the dense solver. Larger ones use block Arnoldi with
/// full reorthogonalization; the basis doubles until every Ritz pair above
/// `cutoff` has residual below `1e-11 |nu|`.
fn shift_invert_eigenvalues(
    k: &DMatrix<f64>,
    b: &DMatrix<f64>,
    sigma: f64,
    cutoff: f64,
) -> Result<Vec<Complex64>> {
    let dim = k.nrows();
    let no_convergence = || Error::Precondition("eigenvalue iteration did not converge".into());
    let lu =
        faer::Mat::<f64>::from_fn(dim, dim, |i, j| k[(i, j)] - sigma * b[(i, j)]).partial_piv_lu();
    let apply = |v: &DVector<f64>| -> DVector<f64> {
        let bv = b * v;
        let x = lu.solve(faer::Mat::<f64>::from_fn(dim, 1, |i, _| bv[i]));
        DVector::from_fn(dim, |i, _| x[(i, 0)])
    };
    let mut m = 64;
    while 2 * m < dim && dim > DENSE_LIMIT {
        let mut basis = Vec::with_capacity(m);
        for s in 0..KRYLOV_BLOCK {
            // fixed quasi-random start block
            let v = DVector::from_fn(dim, |i, _| {
                ((i * (s + 2) + 1) as f64 * 0.618_033_988_749_895).fract() - 0.5
            });
            push_orthonormal(&mut basis, v);
        }
        let mut images = Vec::with_capacity(m);
        while images.len() < basis.len() {
            let w = apply(&basis[images.len()]);
            if basis.len() < m {
                push_orthonormal(&mut basis, w.clone());
            }
            images.push(w);
        }
        let nb = basis.len();
        let v = DMatrix::from_columns(&basis);
        let av = DMatrix::from_columns(&images);
        let h = v.transpose() * &av;
        let eig = faer::Mat::<f64>::from_fn(nb, nb, |i, j| h[(i, j)])
            .eigen()
            .map_err(|_| no_convergence())?;
        let (u, sv) = (eig.U(), eig.S());
        let mut found = Vec::new();
        let mut converged = true;
        for c in 0..nb {
            let theta = to_complex(sv[c]);
            if theta.norm() < cutoff {
                continue;
            }
            let y: Vec<Complex64> = (0..nb).map(|r| to_complex(u[(r, c)])).collect();
            let (mut x_norm, mut r_norm) = (0.0, 0.0);
            for i in 0..dim {
                let (mut x, mut ax) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
                for (r, yr) in y.iter().enumerate() {
                    x += yr * v[(i, r)];
                    ax += yr * av[(i, r)];
                }
                x_norm += x.norm_sqr();
                r_norm += (ax - theta * x).norm_sqr();
            }
            if r_norm.sqrt() > 1e-11 * theta.norm() * x_norm.sqrt() {
                converged = false;
                break;
            }
            found.push(theta);
        }
        if converged {
            return Ok(found);
        }
        m *= 2;
    }
    let rhs = faer::Mat::<f64>::from_fn(dim, dim, |i, j| b[(i, j)]);
    let a = lu.solve(&rhs);
    Ok(a.eigenvalues()
        .map_err(|_| no_convergence())?
        .into_iter()
        .map(to_complex)
        .collect())
}

/// Spectrum of the second-order box discretization on `n` nodes.
///
/// The pencil `K x = lambda B x` is solved through the shift-invert matrix
/// `(K - sigma B)^{-1} B`, whose eigenvalues are `1 / (lambda - sigma)`.
pub fn spectrum_fd(op: &AsymptoticOperator, n: usize, lo: f64, hi: f64) -> Result<SpectrumReport> {
    if n < 16 {
        return Err(Error::DiscretizationTooCoarse { n });
    }
    if !(hi > lo) {
        return Err(Error::Precondition(format!(
            "empty search range [{lo}, {hi}]"
        )));
    }
    let (k, b) = box_pencil(op, n);
    let sigma = 0.25 * std::f64::consts::PI;
    // every eigenvalue in range has |nu| above this, with room for the FD shift
    let reach = (lo - sigma).abs().max((hi - sigma).abs()) + 1.0;
    let nus = shift_invert_eigenvalues(&k, &b, sigma, 0.9 / reach)?;
    if nus.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::SingularNormalEquations);
    }
    let scale = nus.iter().map(|z| z.norm()).fold(0.0, f64::max);

    let threshold = (10.0 * fd_error_estimate(lo.abs().max(hi.abs()), n)).max(1e-8);
    let mut real = Vec::new();
    let mut max_imag: f64 = 0.0;
    let mut excluded = 0;
    for nu in nus.iter() {
        if nu.norm() <= 1e-12 * scale {
            continue;
        }
        let lam = sigma + 1.0 / nu;
        if lam.re < lo || lam.re > hi {
            continue;
        }
        if lam.im.abs() > threshold {
            excluded += 1;
        } else {
            max_imag = max_imag.max(lam.im.abs());
            real.push(lam.re);
        }
    }
    real.sort_by(f64::total_cmp);
    let mut eigenvalues: Vec<f64> = Vec::new();
    let mut multiplicities: Vec<usize> = Vec::new();
    for v in real {
        match eigenvalues.last() {
            Some(&last) if (v - last).abs() <= 1e-6 + 10.0 * fd_error_estimate(v, n) => {
                *multiplicities.last_mut().unwrap() += 1;
            }
            _ => {
                eigenvalues.push(v);
                multiplicities.push(1);
            }
        }
    }
    Ok(SpectrumReport {
        method: Method::FiniteDifference,
        q0: op.q0,
        n: Some(n),
        range: [lo, hi],
        lattice_deviation: lattice_deviation(&eigenvalues),
        gaps: gaps_for(&eigenvalues, lo, hi)?,
        eigenvalues,
        multiplicities,
        max_imag,
        excluded_complex: excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

/// A path `t -> gamma(t)` with a closed-form derivative, tested against the eigen-equation.
pub trait EigenPath {
    fn lambda(&self) -> f64;
    fn value(&self, t: f64) -> Vector4<f64>;
    fn derivative(&self, t: f64) -> Vector4<f64>;
}

/// Closed-form eigenvector of `A` for `lambda` in `(pi/2) Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenvectorFn {
    pub lambda: f64,
    pub kappa: f64,
    pub q0: f64,
    pub parity: Parity,
}

pub fn analytic_eigenvector(lambda: f64, q0: f64, kappa: f64) -> Result<EigenvectorFn> {
    let k = lambda / FRAC_PI_2;
    if (k - k.round()).abs() > 1e-9 || kappa == 0.0 {
        return Err(Error::NotInSpectrum { lambda });
    }
    let parity = if (k.round() as i64) % 2 == 0 {
        Parity::Even
    } else {
        Parity::Odd
    };
    Ok(EigenvectorFn {
        lambda,
        kappa,
        q0,
        parity,
    })
}

impl EigenvectorFn {
    pub fn with_kappa(self, kappa: f64) -> Self {
        Self { kappa, ..self }
    }
}

impl EigenPath for EigenvectorFn {
    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn value(&self, t: f64) -> Vector4<f64> {
        let (s, c) = (self.lambda * t).sin_cos();
        match self.parity {
            Parity::Even => Vector4::new(0.0, c, -s, 0.0) * self.kappa,
            Parity::Odd => Vector4::new(c, -self.q0 * c, 0.0, s) * (-self.kappa),
        }
    }

    fn derivative(&self, t: f64) -> Vector4<f64> {
        let (s, c) = (self.lambda * t).sin_cos();
        let l = self.lambda;
        match self.parity {
            Parity::Even => Vector4::new(0.0, -s, -c, 0.0) * (self.kappa * l),
            Parity::Odd => Vector4::new(-s, self.q0 * s, 0.0, c) * (-self.kappa * l),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenResidual {
    /// `max_t |gamma' - lambda M gamma|`.
    pub ode: f64,
    /// Largest violated boundary component.
    pub boundary: f64,
}

impl EigenResidual {
    pub fn total(&self) -> f64 {
        self.ode + self.boundary
    }
}

/// Defect of `gamma' = lambda M_inf gamma` with the boundary conditions, on 1001 points.
pub fn eigen_ode_residual(e: &dyn EigenPath, op: &AsymptoticOperator) -> EigenResidual {
    let n = 1000;
    let mut ode: f64 = 0.0;
    for k in 0..=n {
        let t = k as f64 / n as f64;
        let r = e.derivative(t) - op.m_inf * e.value(t) * e.lambda();
        ode = ode.max(r.amax());
    }
    let (g0, g1) = (e.value(0.0), e.value(1.0));
    let boundary = g0[2]
        .abs()
        .max(g0[3].abs())
        .max(g1[0].abs())
        .max(g1[2].abs());
    EigenResidual { ode, boundary }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KatoReport {
    /// Hausdorff distance between the spectra of `T` and `T + A0`.
    pub distance: f64,
    /// Spectral norm of `A0`.
    pub bound: f64,
    pub holds: bool,
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let defect = (m - m.transpose()).amax();
    if defect > 1e-12 * (1.0 + m.amax()) {
        return Err(Error::NotSymmetric { defect });
    }
    Ok(())
}

fn hausdorff(a: &[f64], b: &[f64]) -> f64 {
    let one_way = |x: &[f64], y: &[f64]| {
        x.iter()
            .map(|p| {
                y.iter()
                    .map(|q| (p - q).abs())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|_| Error::Precondition("eigenvalue iteration did not converge".into()))
}

/// Spectral distance between `T` and `T + A0` against `|A0|`.
pub fn kato_distance(t_mat: &DMatrix<f64>, a0: &DMatrix<f64>) -> Result<KatoReport> {
    check_symmetric(t_mat)?;
    check_symmetric(a0)?;
    if t_mat.shape() != a0.shape() {
        return Err(Error::GridMismatch("matrices differ in size".into()));
    }
    let before = symmetric_eigenvalues(t_mat)?;
    let after = symmetric_eigenvalues(&(t_mat + a0))?;
    let bound = symmetric_eigenvalues(a0)?
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let distance = hausdorff(&before, &after);
    Ok(KatoReport {
        distance,
        bound,
        holds: distance <= bound + 1e-10,
    })
}

/// Symmetric discretization of `A` on `n` nodes.
///
/// In a frame orthonormal for `Omega_inf M_inf` the operator reads `-S d/dt`
/// with `S` skew; central differences with truncation at the ends give the
/// symmetric matrix `D (x) (-S)`.
pub fn symmetric_surrogate(f: &StructureField, n: usize) -> Result<DMatrix<f64>> {
    let origin = ChartPoint::new(0.0, 0.0, 0.0, 0.0);
    let m = eval_jhat(&origin, f);
    let g = f.metric(&origin.to_vector());
    let r = g
        .cholesky()
        .ok_or(Error::PositivityFailure {
            point: [0.0; 4],
            min_eigenvalue: 0.0,
        })?
        .l()
        .transpose();
    let r_inv = r.try_inverse().ok_or(Error::SingularNormalEquations)?;
    let s = r * m * r_inv;
    let s = (s - s.transpose()) * 0.5;
    let h = 1.0 / (n - 1) as f64;
    let mut out = DMatrix::zeros(4 * n, 4 * n);
    for i in 0..n - 1 {
        for a in 0..4 {
            for b in 0..4 {
                let v = -s[(a, b)] / (2.0 * h);
                out[(4 * i + a, 4 * (i + 1) + b)] += v;
                out[(4 * (i + 1) + a, 4 * i + b)] -= v;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gap {
    pub n: i64,
    pub midpoint: f64,
    pub half_width: f64,
}

/// Margin kept between a gap interval and the nearest eigenvalue, relative to `L`.
pub const GAP_MARGIN: f64 = 1e-9;

/// Intervals whose widest free stretch is below this fraction of `L` count as covered.
pub const MIN_GAP: f64 = 1e-4;

/// For each `n` in `n_range`, the widest subinterval of `[nL, (n+1)L]`
/// free of every supplied eigenvalue.
pub fn spectral_gaps(spectra: &[Vec<f64>], l: f64, n_range: (i64, i64)) -> Result<Vec<Gap>> {
    if !(l > 0.0) {
        return Err(Error::Precondition(format!("L must be positive, got {l}")));
    }
    let mut out = Vec::new();
    for n in n_range.0..=n_range.1 {
        let (a, b) = (n as f64 * l, (n + 1) as f64 * l);
        let mut pts: Vec<f64> = spectra
            .iter()
            .flatten()
            .copied()
            .filter(|v| *v > a && *v < b)
            .collect();
        pts.sort_by(f64::total_cmp);
        let mut edges = vec![a];
        edges.extend(pts);
        edges.push(b);
        let (mut best, mut mid) = (0.0, 0.5 * (a + b));
        for w in edges.windows(2) {
            if w[1] - w[0] > best {
                best = w[1] - w[0];
                mid = 0.5 * (w[0] + w[1]);
            }
        }
        let half_width = 0.5 * best - GAP_MARGIN * l;
        if best < MIN_GAP * l {
            return Err(Error::NoGap { lo: a, hi: b });
        }
        out.push(Gap {
            n,
            midpoint: mid,
            half_width,
        });
    }
    Ok(out)
}

/// `J0`: multiplication by `i` on `R^4 = C^2` with pairs `(re, im)`.
pub fn j0() -> Matrix4<f64> {
    Matrix4::new(
        0.0, -1.0, 0.0, 0.0, //
        1.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, -1.0, //
        0.0, 0.0, 1.0, 0.0,
    )
}

/// Unitary trivialization at one point: `T^T T = Omega M`, `T M = J0 T`,
/// with `(0, 1, 0, 0)` sent to a positive multiple of `(0, 0, 1, 0)`.
pub fn trivialization_at(model: &dyn StructureModel, v: &Vector4<f64>) -> Option<Matrix4<f64>> {
    let g = model.metric(v);
    let m = model.m(v);
    let ip = |a: &Vector4<f64>, b: &Vector4<f64>| a.dot(&(g * b));
    let sigma = Vector4::new(0.0, 1.0, 0.0, 0.0);
    let b2 = sigma / ip(&sigma, &sigma).sqrt();
    let mb2 = m * b2;
    let tau = Vector4::new(1.0, 0.0, 0.0, 0.0);
    let w = tau - b2 * ip(&tau, &b2) - mb2 * ip(&tau, &mb2);
    let norm = ip(&w, &w).sqrt();
    if !(norm > 1e-8) {
        return None;
    }
    let b1 = w / norm;
    let frame = Matrix4::from_columns(&[b1, m * b1, b2, mb2]);
    frame.try_inverse()
}

/// `T(s, t)` on every node of a grid, row-major like the grid.
pub fn build_trivialization(f: &StructureField, grid: &FieldGrid) -> Result<Vec<Matrix4<f64>>> {
    let mut out = Vec::with_capacity(grid.values.len());
    for i in 0..grid.n_s {
        for j in 0..grid.n_t {
            let t = trivialization_at(f, &grid.at(i, j)).ok_or(Error::FrameDegenerate { i, j })?;
            out.push(t);
        }
    }
    Ok(out)
}

/// The limit trivialization at the origin of the chart.
pub fn trivialization_limit(f: &StructureField) -> Option<Matrix4<f64>> {
    trivialization_at(f, &Vector4::zeros())
}

/// `Omega` at the origin, convenient for checks of `T^T J0 T = -Omega`.
pub fn omega_limit(f: &StructureField) -> Matrix4<f64> {
    eval_omega(&ChartPoint::new(0.0, 0.0, 0.0, 0.0), f)
}
