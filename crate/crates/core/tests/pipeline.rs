use holostrip::exact_solutions::{cr_residual, ExplicitFamily, FlattenedChart, SimpleChart};
use holostrip::solver::{gauss_newton_solve, EndCondition, SolverConfig};
use proptest::prelude::*;

fn solve_error(n_s: usize, n_t: usize) -> (f64, f64) {
    let fam = ExplicitFamily::new(0.2).unwrap();
    let oracle = fam.sample((3.0, 9.0), n_s, n_t).unwrap();
    let cfg = SolverConfig::new((3.0, 9.0), n_s, n_t, EndCondition::from_grid(&oracle));
    let chart = SimpleChart {
        profile: fam.profile(),
        bound: 1.0,
    };
    let out = gauss_newton_solve(&oracle, &chart, &cfg).unwrap();
    let h = oracle.h_s().max(oracle.h_t());
    (h, out.grid.max_abs_diff(&oracle).unwrap())
}

#[test]
fn solver_converges_at_second_order() {
    // even n_s keeps the Dirichlet system nonsingular, so h only roughly halves
    let runs: Vec<(f64, f64)> = [(48, 9), (96, 17), (192, 33)]
        .iter()
        .map(|&(a, b)| solve_error(a, b))
        .collect();
    for w in runs.windows(2) {
        let order = (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln();
        assert!(
            (1.8..=2.2).contains(&order),
            "observed order {order} from {runs:?}"
        );
    }
}

#[test]
fn flattened_residual_is_second_order() {
    let fam = ExplicitFamily::new(0.2).unwrap();
    let chart = FlattenedChart {
        field: fam.structure_field(),
        bound: 1.0,
    };
    let coarse = cr_residual(&fam.sample_flattened((4.0, 8.0), 65, 17).unwrap(), &chart).unwrap();
    let fine = cr_residual(&fam.sample_flattened((4.0, 8.0), 129, 33).unwrap(), &chart).unwrap();
    let ratio = coarse.max_norm / fine.max_norm;
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    assert!(fine.max_boundary_violation() < 1e-13);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn explicit_family_meets_both_boundaries(eps in 0.05f64..=0.25, s0 in -4.0f64..4.0) {
        let fam = ExplicitFamily::new(eps).unwrap();
        let chart = SimpleChart { profile: fam.profile(), bound: 1.0 };
        let grid = fam.sample((s0, s0 + 2.0), 21, 9).unwrap();
        let res = cr_residual(&grid, &chart).unwrap();
        prop_assert!(res.max_boundary_violation() < 1e-13 * (1.0 + eps));
        prop_assert!(grid.sup_norm() <= eps * (1.0 + eps));
    }

    #[test]
    fn explicit_family_rejects_eps_outside_the_window(eps in 0.2501f64..2.0) {
        prop_assert!(ExplicitFamily::new(eps).is_err());
        prop_assert!(ExplicitFamily::new(-eps).is_err());
    }
}
