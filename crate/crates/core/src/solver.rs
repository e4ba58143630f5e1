//! Damped Gauss-Newton for the discretized Cauchy-Riemann system
//! `v_s + M(v) v_t = 0` on a truncated strip.
//!
//! Every node carries four equations. Interior nodes use the full system.
//! On `t = 0` two PDE components are traded for `x = y = 0`, and on `t = 1`
//! two are traded for `tau = 0` and the surface equation. The end rows are
//! either pinned to given data or carry one-sided PDE rows.

use nalgebra::Vector4;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact_solutions::CrChart;
use crate::grid::FieldGrid;
use crate::linalg::BandedSpd;

#[derive(Debug, Clone, PartialEq)]
pub enum EndCondition {
    /// Pin the first and last rows to the given values (typically an oracle).
    Dirichlet {
        first: Vec<Vector4<f64>>,
        last: Vec<Vector4<f64>>,
    },
    /// One-sided PDE rows at both ends.
    Free,
}

impl EndCondition {
    /// Dirichlet data copied from the end rows of `grid`.
    pub fn from_grid(grid: &FieldGrid) -> Self {
        EndCondition::Dirichlet {
            first: grid.row(0).to_vec(),
            last: grid.row(grid.n_s - 1).to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub s_range: (f64, f64),
    pub n_s: usize,
    pub n_t: usize,
    pub max_iterations: usize,
    pub residual_tol: f64,
    /// First trial step length; halved until the residual drops.
    pub step_damping: f64,
    pub boundary_weight: f64,
    pub end_condition: EndCondition,
}

impl SolverConfig {
    pub fn new(s_range: (f64, f64), n_s: usize, n_t: usize, end_condition: EndCondition) -> Self {
        Self {
            s_range,
            n_s,
            n_t,
            max_iterations: 25,
            residual_tol: 1e-8,
            step_damping: 1.0,
            boundary_weight: 10.0,
            end_condition,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.residual_tol > 0.0) {
            return bad(format!(
                "residual_tol must be positive, got {}",
                self.residual_tol
            ));
        }
        if self.n_s < 8 || self.n_t < 8 {
            return bad(format!(
                "grid needs at least 8x8 nodes, got {}x{}",
                self.n_s, self.n_t
            ));
        }
        if !(self.step_damping > 0.0 && self.step_damping <= 1.0) {
            return bad(format!(
                "step_damping must lie in (0, 1], got {}",
                self.step_damping
            ));
        }
        if !(self.boundary_weight >= 0.0 && self.boundary_weight.is_finite()) {
            return bad(format!(
                "boundary_weight must be finite and >= 0, got {}",
                self.boundary_weight
            ));
        }
        if !(self.s_range.1 > self.s_range.0) {
            return bad("empty s range".into());
        }
        if let EndCondition::Dirichlet { first, last } = &self.end_condition {
            if first.len() != self.n_t || last.len() != self.n_t {
                return Err(Error::GridMismatch(format!(
                    "end data has {} and {} nodes, grid has {}",
                    first.len(),
                    last.len(),
                    self.n_t
                )));
            }
        }
        Ok(())
    }

    fn check_grid(&self, grid: &FieldGrid) -> Result<()> {
        let same = grid.n_s == self.n_s
            && grid.n_t == self.n_t
            && grid.s_min == self.s_range.0
            && grid.s_max == self.s_range.1
            && grid.t_min == 0.0
            && grid.t_max == 1.0;
        if !same {
            return Err(Error::GridMismatch(format!(
                "grid {}x{} on [{}, {}] does not match the configuration",
                grid.n_s, grid.n_t, grid.s_min, grid.s_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogEntry {
    pub iter: usize,
    /// Euclidean norm of the stacked residual.
    pub residual: f64,
    /// Largest entry of the accepted step.
    pub step_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutput {
    pub grid: FieldGrid,
    pub log: Vec<LogEntry>,
}

impl SolveOutput {
    pub fn residual(&self) -> f64 {
        self.log.last().map_or(f64::NAN, |e| e.residual)
    }

    pub fn iterations(&self) -> usize {
        self.log.last().map_or(0, |e| e.iter)
    }
}

struct Row {
    value: f64,
    entries: Vec<(usize, f64)>,
}

/// Second-order stencil for `d/dx` at index `k` of `n` points.
fn stencil(k: usize, n: usize, h: f64) -> [(usize, f64); 3] {
    let c = 0.5 / h;
    if k == 0 {
        [(0, -3.0 * c), (1, 4.0 * c), (2, -c)]
    } else if k + 1 == n {
        [(n - 3, c), (n - 2, -4.0 * c), (n - 1, 3.0 * c)]
    } else {
        [(k - 1, -c), (k, 0.0), (k + 1, c)]
    }
}

fn col(grid: &FieldGrid, i: usize, j: usize, c: usize) -> usize {
    (i * grid.n_t + j) * 4 + c
}

fn node_rows(
    grid: &FieldGrid,
    chart: &dyn CrChart,
    cfg: &SolverConfig,
    i: usize,
    j: usize,
    jac: bool,
) -> Vec<Row> {
    let v = grid.at(i, j);
    let last_t = grid.n_t - 1;
    let ends = i == 0 || i + 1 == grid.n_s;
    if ends {
        if let EndCondition::Dirichlet { first, last } = &cfg.end_condition {
            let data = if i == 0 { first[j] } else { last[j] };
            return (0..4)
                .map(|c| Row {
                    value: v[c] - data[c],
                    entries: if jac {
                        vec![(col(grid, i, j, c), 1.0)]
                    } else {
                        Vec::new()
                    },
                })
                .collect();
        }
    }
    let ss = stencil(i, grid.n_s, grid.h_s());
    let st = stencil(j, grid.n_t, grid.h_t());
    let ds: Vector4<f64> = ss.iter().map(|&(k, w)| grid.at(k, j) * w).sum();
    let dt: Vector4<f64> = st.iter().map(|&(k, w)| grid.at(i, k) * w).sum();
    let m = chart.structure(&v);
    let r = ds + m * dt;
    let comps: &[usize] = if j == 0 {
        &[0, 1]
    } else if j == last_t {
        &[1, 3]
    } else {
        &[0, 1, 2, 3]
    };
    let dms: Vec<_> = if jac {
        (0..4)
            .map(|c| {
                let mut e = Vector4::zeros();
                e[c] = 1.0;
                chart.structure_derivative(&v, &e) * dt
            })
            .collect()
    } else {
        Vec::new()
    };
    let mut rows: Vec<Row> = comps
        .iter()
        .map(|&a| {
            let mut entries = Vec::new();
            if jac {
                for &(k, w) in &ss {
                    entries.push((col(grid, k, j, a), w));
                }
                for &(k, w) in &st {
                    for b in 0..4 {
                        entries.push((col(grid, i, k, b), m[(a, b)] * w));
                    }
                }
                for (c, dm) in dms.iter().enumerate() {
                    entries.push((col(grid, i, j, c), dm[a]));
                }
            }
            Row {
                value: r[a],
                entries,
            }
        })
        .collect();
    let w = cfg.boundary_weight;
    if w > 0.0 && (j == 0 || j == last_t) {
        let mut push = |value: f64, grad: Vector4<f64>| {
            let entries = if jac {
                (0..4)
                    .filter(|&c| grad[c] != 0.0)
                    .map(|c| (col(grid, i, j, c), w * grad[c]))
                    .collect()
            } else {
                Vec::new()
            };
            rows.push(Row {
                value: w * value,
                entries,
            });
        };
        if j == 0 {
            push(v[2], Vector4::new(0.0, 0.0, 1.0, 0.0));
            push(v[3], Vector4::new(0.0, 0.0, 0.0, 1.0));
        } else {
            push(v[0], Vector4::new(1.0, 0.0, 0.0, 0.0));
            let (g, grad) = chart.surface(&v);
            push(g, grad);
        }
    }
    rows
}

fn assemble(
    grid: &FieldGrid,
    chart: &dyn CrChart,
    cfg: &SolverConfig,
    jac: bool,
) -> Result<Vec<Row>> {
    for v in &grid.values {
        chart.check_domain(v)?;
    }
    let per_node: Vec<Vec<Row>> = (0..grid.n_s * grid.n_t)
        .into_par_iter()
        .map(|k| node_rows(grid, chart, cfg, k / grid.n_t, k % grid.n_t, jac))
        .collect();
    Ok(per_node.into_iter().flatten().collect())
}

/// The stacked residual, in node order (`s` major, then `t`).
pub fn assemble_residual(
    grid: &FieldGrid,
    chart: &dyn CrChart,
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    cfg.check_grid(grid)?;
    Ok(assemble(grid, chart, cfg, false)?
        .into_iter()
        .map(|r| r.value)
        .collect())
}

fn norm(rows: &[Row]) -> f64 {
    rows.iter().map(|r| r.value * r.value).sum::<f64>().sqrt()
}

/// Gauss-Newton step: solves `J^T J dx = -J^T r` with a banded Cholesky factorization.
fn newton_step(rows: &mut [Row], n: usize) -> Result<Vec<f64>> {
    let mut bw = 0;
    for row in rows.iter_mut() {
        row.entries.sort_by_key(|e| e.0);
        row.entries.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        if let (Some(lo), Some(hi)) = (row.entries.first(), row.entries.last()) {
            bw = bw.max(hi.0 - lo.0);
        }
    }
    let mut normal = BandedSpd::zeros(n, bw);
    let mut rhs = vec![0.0; n];
    for row in rows.iter() {
        for (ka, &(ca, va)) in row.entries.iter().enumerate() {
            rhs[ca] -= va * row.value;
            for &(cb, vb) in &row.entries[..=ka] {
                normal.add_lower(ca, cb, va * vb);
            }
        }
    }
    normal.solve(&rhs)
}

/// Damped Gauss-Newton on the stacked residual.
///
/// With Dirichlet ends the centered s-difference on `n_s - 2` interior rows
/// has a zero mode when that count is odd, and the t-operator has 0 in its
/// spectrum, so odd `n_s` gives [`Error::SingularNormalEquations`]. Use an
/// even `n_s` or free ends.
pub fn gauss_newton_solve(
    initial: &FieldGrid,
    chart: &dyn CrChart,
    cfg: &SolverConfig,
) -> Result<SolveOutput> {
    cfg.validate()?;
    cfg.check_grid(initial)?;
    let n = initial.values.len() * 4;
    let mut grid = initial.clone();
    let mut rows = assemble(&grid, chart, cfg, true)?;
    let mut res = norm(&rows);
    let mut log = vec![LogEntry {
        iter: 0,
        residual: res,
        step_norm: 0.0,
    }];
    let give_up = |grid: FieldGrid, log: Vec<LogEntry>| {
        let iterations = log.last().map_or(0, |e| e.iter);
        let residual = log.last().map_or(f64::NAN, |e| e.residual);
        Err(Error::MaxIterationsExceeded {
            iterations,
            residual,
            best: Box::new(SolveOutput { grid, log }),
        })
    };
    for iter in 1..=cfg.max_iterations {
        if res <= cfg.residual_tol {
            return Ok(SolveOutput { grid, log });
        }
        let dx = newton_step(&mut rows, n)?;
        let mut a = cfg.step_damping;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = grid.with_values(
                grid.values
                    .iter()
                    .enumerate()
                    .map(|(k, v)| v + Vector4::from_fn(|c, _| a * dx[4 * k + c]))
                    .collect(),
            )?;
            // a step leaving the chart counts as a failed step
            match assemble(&trial, chart, cfg, false) {
                Ok(r) if norm(&r) < res => {
                    accepted = Some(trial);
                    break;
                }
                Ok(_) | Err(Error::ChartExceeded { .. }) => a *= 0.5,
                Err(e) => return Err(e),
            }
        }
        let Some(next) = accepted else {
            // no descent along the Gauss-Newton direction: the residual has stalled
            return give_up(grid, log);
        };
        grid = next;
        rows = assemble(&grid, chart, cfg, true)?;
        res = norm(&rows);
        let step_norm = a * dx.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        log.push(LogEntry {
            iter,
            residual: res,
            step_norm,
        });
    }
    if res <= cfg.residual_tol {
        Ok(SolveOutput { grid, log })
    } else {
        give_up(grid, log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_solutions::{ExplicitFamily, SimpleChart};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chart(eps: f64) -> SimpleChart {
        SimpleChart {
            profile: ExplicitFamily::new(eps).unwrap().profile(),
            bound: 1.0,
        }
    }

    fn oracle(s: (f64, f64), n_s: usize, n_t: usize) -> FieldGrid {
        ExplicitFamily::new(0.2)
            .unwrap()
            .sample(s, n_s, n_t)
            .unwrap()
    }

    #[test]
    fn zero_field_solves_the_system() {
        let g = FieldGrid::from_fn((0.0, 1.0), 8, 8, |_, _| Vector4::zeros()).unwrap();
        let cfg = SolverConfig::new((0.0, 1.0), 8, 8, EndCondition::from_grid(&g));
        let r = assemble_residual(&g, &chart(0.2), &cfg).unwrap();
        assert_eq!(r.len(), 8 * 8 * 4);
        assert!(r.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn oracle_residual_is_second_order() {
        let ch = chart(0.2);
        let peak = |n_s: usize, n_t: usize| {
            let g = oracle((3.0, 9.0), n_s, n_t);
            let cfg = SolverConfig::new((3.0, 9.0), n_s, n_t, EndCondition::from_grid(&g));
            assemble_residual(&g, &ch, &cfg)
                .unwrap()
                .iter()
                .fold(0.0f64, |m, x| m.max(x.abs()))
        };
        let (coarse, fine) = (peak(61, 9), peak(121, 17));
        let ratio = coarse / fine;
        assert!(ratio > 3.5 && ratio < 4.5, "{coarse} {fine}");
    }

    #[test]
    fn zero_weight_drops_boundary_rows() {
        let g = oracle((3.0, 9.0), 10, 8);
        let mut cfg = SolverConfig::new((3.0, 9.0), 10, 8, EndCondition::from_grid(&g));
        let full = assemble_residual(&g, &chart(0.2), &cfg).unwrap().len();
        cfg.boundary_weight = 0.0;
        let bare = assemble_residual(&g, &chart(0.2), &cfg).unwrap().len();
        assert_eq!(full - bare, 8 * 4);
        assert!(matches!(
            gauss_newton_solve(&g, &chart(0.2), &cfg),
            Err(Error::SingularNormalEquations)
        ));
    }

    #[test]
    fn config_is_validated() {
        let g = oracle((3.0, 9.0), 10, 8);
        let mut cfg = SolverConfig::new((3.0, 9.0), 10, 8, EndCondition::Free);
        cfg.residual_tol = 0.0;
        assert!(matches!(
            gauss_newton_solve(&g, &chart(0.2), &cfg),
            Err(Error::InvalidParameter(_))
        ));
        let cfg = SolverConfig::new((3.0, 9.0), 10, 9, EndCondition::Free);
        assert!(matches!(
            gauss_newton_solve(&g, &chart(0.2), &cfg),
            Err(Error::GridMismatch(_))
        ));
        let cfg = SolverConfig::new((3.0, 9.0), 10, 7, EndCondition::Free);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn odd_row_count_is_rank_deficient() {
        for n_s in [31, 33] {
            let g = oracle((3.0, 9.0), n_s, 9);
            let cfg = SolverConfig::new((3.0, 9.0), n_s, 9, EndCondition::from_grid(&g));
            assert!(matches!(
                gauss_newton_solve(&g, &chart(0.2), &cfg),
                Err(Error::SingularNormalEquations)
            ));
        }
        let g = oracle((3.0, 9.0), 32, 9);
        let cfg = SolverConfig::new((3.0, 9.0), 32, 9, EndCondition::from_grid(&g));
        assert!(gauss_newton_solve(&g, &chart(0.2), &cfg).is_ok());
    }

    #[test]
    fn exact_start_converges_quickly() {
        let g = oracle((3.0, 9.0), 60, 12);
        let cfg = SolverConfig::new((3.0, 9.0), 60, 12, EndCondition::from_grid(&g));
        let out = gauss_newton_solve(&g, &chart(0.2), &cfg).unwrap();
        assert!(out.iterations() <= 2, "{:?}", out.log);
        assert!(out.residual() <= 1e-8);
    }

    #[test]
    fn noisy_start_recovers_oracle() {
        let g = oracle((3.0, 9.0), 60, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut vals = g.values.clone();
        for (k, v) in vals.iter_mut().enumerate() {
            let i = k / g.n_t;
            if i > 0 && i + 1 < g.n_s {
                *v += Vector4::from_fn(|_, _| rng.random_range(-1e-2..1e-2));
            }
        }
        let start = g.with_values(vals).unwrap();
        let cfg = SolverConfig::new((3.0, 9.0), 60, 12, EndCondition::from_grid(&g));
        let out = gauss_newton_solve(&start, &chart(0.2), &cfg).unwrap();
        assert!(out.residual() <= 1e-8);
        for w in out.log.windows(2) {
            assert!(w[1].residual < w[0].residual);
        }
        assert!(out.grid.max_abs_diff(&g).unwrap() < 1e-3);
    }

    #[test]
    fn unreachable_tolerance_returns_best_iterate() {
        let g = oracle((3.0, 9.0), 8, 8);
        let mut cfg = SolverConfig::new((3.0, 9.0), 8, 8, EndCondition::from_grid(&g));
        cfg.residual_tol = 1e-20;
        match gauss_newton_solve(&g, &chart(0.2), &cfg) {
            Err(Error::MaxIterationsExceeded { best, residual, .. }) => {
                assert!(residual > 1e-20);
                assert_eq!(best.residual(), residual);
                assert!(best.grid.same_shape(&g));
            }
            other => panic!("{other:?}"),
        }
        cfg.residual_tol = 1e-12;
        cfg.max_iterations = 1;
        let noisy = g.map(|_, t, v| v + Vector4::repeat(1e-3 * t));
        assert!(matches!(
            gauss_newton_solve(&noisy, &chart(0.2), &cfg),
            Err(Error::MaxIterationsExceeded { iterations: 1, .. })
        ));
    }

    #[test]
    fn start_outside_chart_is_rejected() {
        let g = oracle((3.0, 9.0), 8, 8).map(|_, _, v| v + Vector4::new(0.0, 0.0, 5.0, 0.0));
        let cfg = SolverConfig::new((3.0, 9.0), 8, 8, EndCondition::Free);
        assert!(matches!(
            gauss_newton_solve(&g, &chart(0.2), &cfg),
            Err(Error::ChartExceeded { .. })
        ));
    }
}
