//! Randomised invariants of the discrete and refined solvers.

use proptest::prelude::*;
use training_planner::continuous::{solve_refined, ContinuousProblem, Objective, SaddleConfig};
use training_planner::discrete::{self, CostScaling, DiscreteProblem, Mode, UNREACHABLE};
use training_planner::dynamics::{euler_step, DynamicsSpec};
use training_planner::grid::{Interval, UniformGrid};
use training_planner::oracle::{exhaustive_value, OracleBudget};

const DYNAMICS: [&str; 4] = ["t - a", "2*t - a - 1", "t*a - 1", "t - a + min(max(x, -1), 1)"];
const COSTS: [&str; 4] = ["x^2 + t", "(t - a)^2 + abs(x)", "max(x, 0) + t^2 + a", "abs(x - 1) + t*a"];

fn iv(lo: f64, hi: f64) -> Interval {
    Interval::new(lo, hi).unwrap()
}

/// Integral instance: integer controls, disturbances and states, Δt = 1. The
/// grid covers three steps at the fastest rate (15) from any start.
fn integral(f: usize, e: usize, t_span: usize, a_span: usize, stages: usize, x0: i32) -> DiscreteProblem {
    DiscreteProblem {
        stages,
        dynamics: DynamicsSpec::parse(
            DYNAMICS[f],
            COSTS[e],
            iv(0.0, t_span as f64),
            iv(0.0, a_span as f64),
            iv(0.0, 1.0),
        )
        .unwrap(),
        stage_bounds: Vec::new(),
        dt: vec![1.0],
        x0: x0 as f64,
        state_grid: UniformGrid::new(-60.0, 60.0, 121).unwrap(),
        control_nodes: t_span + 1,
        disturbance_nodes: a_span + 1,
        terminal_set: None,
        mode: Mode::MinCost,
        cost_scaling: CostScaling::PerStage,
    }
}

fn instance() -> impl Strategy<Value = DiscreteProblem> {
    (0..DYNAMICS.len(), 0..COSTS.len(), 1..=4usize, 1..=4usize, 1..=3usize, -3..=3i32)
        .prop_map(|(f, e, t, a, n, x0)| integral(f, e, t, a, n, x0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_oracle_on_integral_instances(p in instance()) {
        let sol = discrete::solve_min_cost(&p).unwrap();
        let exact = exhaustive_value(&p, OracleBudget::default()).unwrap().value;
        let dp = sol.value_at(p.x0).unwrap();
        prop_assert!((dp - exact).abs() <= 1e-12, "dp {} oracle {}", dp, exact);
    }

    #[test]
    fn table_and_policy_invariants(p in instance()) {
        let sol = discrete::solve_min_cost(&p).unwrap();
        prop_assert!(sol.table.layers[0].iter().all(|v| *v == Some(0.0)));
        // every cost expression above is non-negative on the sampled ranges
        for layer in &sol.table.layers {
            prop_assert!(layer.iter().flatten().all(|v| *v >= 0.0));
        }
        let b = p.bounds(1);
        for action in sol.policy.layers.iter().flatten().flatten() {
            prop_assert!(b.control.contains(action.control));
            prop_assert!(b.disturbance.contains(action.disturbance));
        }
    }

    #[test]
    fn worst_case_play_accrues_the_value(p in instance()) {
        let sol = discrete::solve_min_cost(&p).unwrap();
        let (seq, accrued) = discrete::worst_case_disturbance(&p, &sol).unwrap();
        let traj = discrete::simulate(&p, &sol.policy, &seq).unwrap();
        let value = sol.value_at(p.x0).unwrap();
        prop_assert!((traj.total_cost - value).abs() <= 1e-12);
        prop_assert!((accrued - value).abs() <= 1e-12);
        let mut x = p.x0;
        for s in &traj.steps {
            x = euler_step(&p.dynamics, x, s.control, s.disturbance, p.dt(s.stage)).unwrap();
            prop_assert_eq!(x, s.x);
        }
    }

    #[test]
    fn simulated_cost_never_beats_guarantee_against_any_disturbance(
        p in instance(),
        picks in prop::collection::vec(0..5usize, 3),
    ) {
        let sol = discrete::solve_min_cost(&p).unwrap();
        let grid = p.disturbances(1);
        let seq: Vec<f64> = picks[..p.stages].iter().map(|&i| grid[i % grid.len()]).collect();
        let traj = discrete::simulate(&p, &sol.policy, &seq).unwrap();
        prop_assert!(traj.total_cost <= sol.value_at(p.x0).unwrap() + 1e-12);
    }

    #[test]
    fn nested_grids_are_monotone(
        f in 0..DYNAMICS.len(), e in 0..COSTS.len(), m in 1..=2usize, n in 1..=3usize, x0 in -2..=2i32,
    ) {
        // coarse grids use even integers of [0, 2m]; fine grids add the odd ones
        let fine = integral(f, e, 2 * m, 2 * m, n, x0);
        let mut coarse_t = fine.clone();
        coarse_t.control_nodes = m + 1;
        let mut coarse_a = fine.clone();
        coarse_a.disturbance_nodes = m + 1;
        let v = |p: &DiscreteProblem| discrete::solve_min_cost(p).unwrap().value_at(p.x0).unwrap();
        prop_assert!(v(&fine) <= v(&coarse_t));
        prop_assert!(v(&fine) >= v(&coarse_a));
        let o = |p: &DiscreteProblem| exhaustive_value(p, OracleBudget::default()).unwrap().value;
        prop_assert!(o(&fine) <= o(&coarse_t));
        prop_assert!(o(&fine) >= o(&coarse_a));
    }

    #[test]
    fn min_time_matches_oracle(f in 0..DYNAMICS.len(), t in 1..=3usize, a in 1..=3usize, n in 1..=3usize, lo in 1..=3i32) {
        let mut p = integral(f, 0, t, a, n, 0);
        p.mode = Mode::MinTime;
        p.terminal_set = Some(iv(lo as f64, 60.0));
        let sol = discrete::solve_min_time(&p).unwrap();
        for (i, v) in sol.table.layers[0].iter().enumerate() {
            let x = p.state_grid.node(i);
            prop_assert_eq!(*v, Some(if x >= lo as f64 { 0.0 } else { UNREACHABLE }));
        }
        let exact = exhaustive_value(&p, OracleBudget::default()).unwrap().value;
        prop_assert_eq!(sol.value_at(p.x0).unwrap(), exact);
    }

    #[test]
    fn solves_are_bit_identical(p in instance()) {
        let a = discrete::solve(&p).unwrap();
        let b = discrete::solve(&p).unwrap();
        prop_assert_eq!(a, b);
    }
}

fn refined(f: &str, e: &str, horizon: f64) -> ContinuousProblem {
    ContinuousProblem {
        horizon,
        dynamics: DynamicsSpec::parse(f, e, iv(0.0, 1.0), iv(0.0, 1.0), iv(0.0, 1.0)).unwrap(),
        x0: 0.0,
        terminal_set: None,
        objective: Objective::TotalCost,
        base_partition: 2,
        levels: 3,
        state_grid: UniformGrid::new(-4.0, 4.0, 33).unwrap(),
        control_nodes: 3,
        disturbance_nodes: 3,
        saddle: SaddleConfig { max_cells: 4, ..SaddleConfig::default() },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn constants_are_level_independent(f in -1.0..1.0f64, e in 0.0..3.0f64, horizon in 0.5..3.0f64) {
        let r = solve_refined(&refined(&format!("{f}"), &format!("{e}"), horizon)).unwrap();
        for l in &r.report.levels {
            prop_assert!((l.value - e * horizon).abs() <= 1e-12, "{:?}", l);
        }
    }

    #[test]
    fn levels_match_their_discrete_problems(k in 0.0..1.0f64) {
        let p = refined("t - a", &format!("x^2 + {k}*t"), 1.0);
        let r = solve_refined(&p).unwrap();
        let n = r.report.levels.len();
        for l in &r.report.levels {
            let d = p.level_problem(l.level, l.state_grid);
            let v = discrete::solve(&d).unwrap().value_at(d.x0).unwrap();
            prop_assert_eq!(v, l.value);
        }
        prop_assert_eq!(
            r.report.epsilon_hat,
            (r.report.levels[n - 1].value - r.report.levels[n - 2].value).abs()
        );
    }
}
